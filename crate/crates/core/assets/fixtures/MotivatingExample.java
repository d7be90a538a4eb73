public class MotivatingExample {
    static int scale(int a, int b) {
        if (Math.abs(b) > 1)
            return a / b;
        return b;
    }

    static void run(Scanner input) {
        int x = input.nextInt();
        int y = 5;
        int r = x / y;
        int z = x;
        y = scale(r, z);
        int q = r / y;
    }
}
