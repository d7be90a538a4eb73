public class Direct {
    static void run(Scanner input) {
        int x = input.nextInt();
        int r = 10 / x;
    }
}
