public class Unconstrained {
    static int limit;

    static void viaCall(Scanner input) {
        int data = input.nextInt();
        if (threshold() > 3) {
            int r = 100 / data;
        }
    }

    static void viaGlobal(Scanner input) {
        int data = input.nextInt();
        if (limit > 3) {
            int r = 100 / data;
        }
    }
}
