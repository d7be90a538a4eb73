public class TinyMagnitude {
    static void both(Scanner input) {
        float data = input.nextFloat();
        if (data > 0 && Math.abs(data) > 0.000001) {
            float r = 100.0f / data;
        }
    }

    static void either(Scanner input) {
        float data = input.nextFloat();
        if (data < 0 || Math.abs(data) > 0.000001) {
            float r = 100.0f / data;
        }
    }
}
