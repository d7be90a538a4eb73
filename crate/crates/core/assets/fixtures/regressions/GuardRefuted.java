public class GuardRefuted {
    static void run(Scanner input) {
        int data = input.nextInt();
        if (data != 0) {
            int r = 100 / data;
        }
    }
}
