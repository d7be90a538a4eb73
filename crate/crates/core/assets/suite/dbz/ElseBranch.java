public class ElseBranch {
    static void run(Scanner input) {
        int x = input.nextInt();
        int r = 0;
        if (x > 0) {
            r = 1 / x;
        } else {
            r = 2 / x;
        }
    }
}
