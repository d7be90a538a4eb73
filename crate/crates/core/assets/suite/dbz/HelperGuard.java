public class HelperGuard {
    static boolean nonZero(int v) {
        return v != 0;
    }

    static void run(Scanner input) {
        int x = input.nextInt();
        int r = 0;
        if (nonZero(x)) {
            r = 9 / x;
        }
    }
}
