#pragma once

#include <string>
#include <vector>

namespace fe2e {

// Minimal SVG writer for arrow fields and polylines; no plotting dependency.
class SvgWriter {
public:
    SvgWriter(double width, double height);

    // Maps data coordinates [x0,x1]x[y0,y1] onto the canvas (y up).
    void set_viewport(double x0, double x1, double y0, double y1);

    void comment(const std::string& text);
    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double stroke_width = 1.0);
    void arrow(double x, double y, double dx, double dy, const std::string& stroke,
               double head = 0.04);
    void circle(double x, double y, double radius_px, const std::string& fill);
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke);
    void text(double x, double y, const std::string& content, int font_px = 12);
    void axes(const std::string& stroke = "#888888");

    void save(const std::string& path) const;

private:
    double to_px_x(double x) const;
    double to_px_y(double y) const;

    double width_, height_;
    double x0_ = -1.0, x1_ = 1.0, y0_ = -1.0, y1_ = 1.0;
    std::string body_;
};

}  // namespace fe2e
