public class DbzSinks {
    int sample(int a, int b, int c) {
        int q = a / b;
        int r = a % c;
        a /= b;
        int s = a * b;
        int t = 100 / (b + 1);
        return q + r + s + t;
    }
}
