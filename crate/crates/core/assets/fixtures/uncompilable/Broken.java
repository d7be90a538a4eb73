import com.nowhere.Missing;

public class Broken {
    static void run(Scanner input) {
        int x = input.nextInt();
        int r = 10 / x;
    }

    static void unfinished(int a) {
        if (a > 0) {
            Missing m = new Missing(a;
    }
