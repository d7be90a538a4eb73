import javax.servlet.http.*;

public class XssSources {
    void sample(HttpServletRequest request, Cookie cookie) throws Exception {
        String name = request.getParameter("name");
        String q = request.getQueryString();
        String safe = "constant";
        String h;
        h = request.getHeader("Referer");
        String v = cookie.getValue();
        int len = name.length();
    }
}
