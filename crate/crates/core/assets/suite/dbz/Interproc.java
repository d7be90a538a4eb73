public class Interproc {
    static int divide(int a, int b) {
        return a / b;
    }

    static void run(Scanner input) {
        int x = input.nextInt();
        int q = divide(1, x);
    }
}
