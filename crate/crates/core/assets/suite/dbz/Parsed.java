public class Parsed {
    static void run(String text) {
        int n = Integer.parseInt(text);
        int m = n;
        int r = 100 % m;
    }
}
