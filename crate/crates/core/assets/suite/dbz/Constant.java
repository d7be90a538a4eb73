public class Constant {
    static void run(Scanner input) {
        int x = input.nextInt();
        int d = 3;
        int r = x / d;
    }
}
