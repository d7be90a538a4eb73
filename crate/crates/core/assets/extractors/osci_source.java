import java.io.BufferedReader;

public class OsciSources {
    void sample(BufferedReader reader) throws Exception {
        String cmd = System.getenv("CMD");
        String p = System.getProperty("user.cmd");
        String line;
        line = reader.readLine();
        String fixed = "ls";
        String upper = cmd.toUpperCase();
    }
}
