#include "svg.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "../error.hpp"

namespace fe2e {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

SvgWriter::SvgWriter(double width, double height) : width_(width), height_(height) {}

void SvgWriter::set_viewport(double x0, double x1, double y0, double y1) {
    x0_ = x0;
    x1_ = x1;
    y0_ = y0;
    y1_ = y1;
}

double SvgWriter::to_px_x(double x) const { return (x - x0_) / (x1_ - x0_) * width_; }

double SvgWriter::to_px_y(double y) const { return height_ - (y - y0_) / (y1_ - y0_) * height_; }

void SvgWriter::comment(const std::string& text) { body_ += "<!-- " + text + " -->\n"; }

void SvgWriter::line(double x1, double y1, double x2, double y2, const std::string& stroke,
                     double stroke_width) {
    body_ += "<line x1=\"" + fmt(to_px_x(x1)) + "\" y1=\"" + fmt(to_px_y(y1)) + "\" x2=\"" +
             fmt(to_px_x(x2)) + "\" y2=\"" + fmt(to_px_y(y2)) + "\" stroke=\"" + stroke +
             "\" stroke-width=\"" + fmt(stroke_width) + "\"/>\n";
}

void SvgWriter::arrow(double x, double y, double dx, double dy, const std::string& stroke,
                      double head) {
    double x2 = x + dx, y2 = y + dy;
    line(x, y, x2, y2, stroke);
    double len = std::hypot(dx, dy);
    if (len <= 0.0) return;
    double ux = dx / len, uy = dy / len;
    // two short strokes forming the arrow head
    line(x2, y2, x2 - head * (ux + 0.6 * uy), y2 - head * (uy - 0.6 * ux), stroke);
    line(x2, y2, x2 - head * (ux - 0.6 * uy), y2 - head * (uy + 0.6 * ux), stroke);
}

void SvgWriter::circle(double x, double y, double radius_px, const std::string& fill) {
    body_ += "<circle cx=\"" + fmt(to_px_x(x)) + "\" cy=\"" + fmt(to_px_y(y)) + "\" r=\"" +
             fmt(radius_px) + "\" fill=\"" + fill + "\"/>\n";
}

void SvgWriter::polyline(const std::vector<std::pair<double, double>>& pts,
                         const std::string& stroke) {
    body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" points=\"";
    for (const auto& [x, y] : pts) body_ += fmt(to_px_x(x)) + "," + fmt(to_px_y(y)) + " ";
    body_ += "\"/>\n";
}

void SvgWriter::text(double x, double y, const std::string& content, int font_px) {
    body_ += "<text x=\"" + fmt(to_px_x(x)) + "\" y=\"" + fmt(to_px_y(y)) + "\" font-size=\"" +
             std::to_string(font_px) + "\" font-family=\"monospace\">" + content + "</text>\n";
}

void SvgWriter::axes(const std::string& stroke) {
    line(x0_, 0.0, x1_, 0.0, stroke, 0.5);
    line(0.0, y0_, 0.0, y1_, stroke, 0.5);
}

void SvgWriter::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw_io("svg: cannot open for writing: " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
      << height_ << "\">\n";
    f << body_;
    f << "</svg>\n";
    if (!f) throw_io("svg: write failed: " + path);
}

}  // namespace fe2e
