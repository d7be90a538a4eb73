public class Unconstrained {
    static void run(Scanner input, Config config) {
        int x = input.nextInt();
        int r = 0;
        if (config.level() > 2) {
            r = 6 / x;
        }
    }
}
