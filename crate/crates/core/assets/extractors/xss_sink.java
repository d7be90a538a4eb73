import javax.servlet.http.*;

public class XssSinks {
    void sample(HttpServletResponse response, String data, String other) throws Exception {
        response.getWriter().println("<br>" + data);
        response.getWriter().print(other);
        System.out.println(data);
        response.setContentType("text/html");
    }
}
