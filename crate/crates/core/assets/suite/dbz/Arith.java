public class Arith {
    static void run(Scanner input) {
        int x = input.nextInt();
        int y = x + 1;
        int r = 5 / y;
    }
}
