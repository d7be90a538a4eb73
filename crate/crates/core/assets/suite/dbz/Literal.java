public class Literal {
    static void run() {
        int d = 0;
        int r = 7 / d;
    }
}
