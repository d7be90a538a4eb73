public class Guarded {
    static void run(Scanner input) {
        int x = input.nextInt();
        int r = 0;
        if (x != 0) {
            r = 10 / x;
        }
    }
}
