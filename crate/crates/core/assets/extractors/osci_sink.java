public class OsciSinks {
    void sample(String data, String dir) throws Exception {
        Process p = Runtime.getRuntime().exec("cmd.exe /c dir " + data);
        ProcessBuilder pb = new ProcessBuilder(dir);
        System.out.println(data);
    }
}
