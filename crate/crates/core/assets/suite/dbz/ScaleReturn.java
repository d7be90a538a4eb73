public class ScaleReturn {
    static int scale(int a, int b) {
        if (Math.abs(b) > 1)
            return a / b;
        return b;
    }

    static void run(Scanner input) {
        int x = input.nextInt();
        int y = scale(3, x);
        int q = 12 / y;
    }
}
