import java.io.BufferedReader;
import java.util.Scanner;

public class DbzSources {
    void sample(Scanner input, BufferedReader reader) throws Exception {
        int x = input.nextInt();
        int y = 5;
        float f = 0.0f;
        int data = Integer.MIN_VALUE;
        data = Integer.parseInt(reader.readLine());
        int z = 0;
        int w = x + 1;
        long n = 10L;
        z = 0;
    }
}
