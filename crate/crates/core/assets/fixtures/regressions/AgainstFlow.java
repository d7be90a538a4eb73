public class AgainstFlow {
    static void run(Scanner input) {
        int d = 1;
        int r = 10 / d;
        d = input.nextInt();
    }
}
