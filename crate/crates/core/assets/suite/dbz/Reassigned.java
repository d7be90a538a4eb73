public class Reassigned {
    static void run(Scanner input) {
        int x = input.nextInt();
        x = 4;
        int r = 8 / x;
    }
}
