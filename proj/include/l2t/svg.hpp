#pragma once

// Minimal self-contained SVG line charts; no external assets, deterministic
// output bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "l2t/error.hpp"

namespace l2t {

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

class SvgLinePlot {
public:
    SvgLinePlot(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add_series(PlotSeries s) {
        if (s.x.size() != s.y.size()) throw Error("plot series: x/y length mismatch");
        series_.push_back(std::move(s));
    }

    std::size_t series_count() const { return series_.size(); }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write plot '" + path + "'");
        out << render();
    }

    std::string render() const {
        const double W = 720, H = 440;
        const double ml = 64, mr = 160, mt = 40, mb = 48;
        const double pw = W - ml - mr, ph = H - mt - mb;

        double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
        bool any = false;
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!any) {
                    xmin = xmax = s.x[i];
                    ymin = ymax = s.y[i];
                    any = true;
                } else {
                    xmin = std::min(xmin, s.x[i]);
                    xmax = std::max(xmax, s.x[i]);
                    ymin = std::min(ymin, s.y[i]);
                    ymax = std::max(ymax, s.y[i]);
                }
            }
        if (xmax == xmin) xmax = xmin + 1;
        if (ymax == ymin) ymax = ymin + 1;

        auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
        auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };
        auto num = [](double v) {
            char b[32];
            std::snprintf(b, sizeof(b), "%.6g", v);
            return std::string(b);
        };

        static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                        "#9467bd", "#ff7f0e", "#8c564b"};
        std::string s;
        s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" +
             num(H) + "\" viewBox=\"0 0 " + num(W) + " " + num(H) + "\">\n";
        s += "<rect width=\"" + num(W) + "\" height=\"" + num(H) + "\" fill=\"white\"/>\n";
        s += "<text x=\"" + num(ml) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" +
             escape(title_) + "</text>\n";
        // frame
        s += "<rect x=\"" + num(ml) + "\" y=\"" + num(mt) + "\" width=\"" + num(pw) +
             "\" height=\"" + num(ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
        // axis labels and extents
        s += "<text x=\"" + num(ml + pw / 2) + "\" y=\"" + num(H - 12) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
             escape(x_label_) + "</text>\n";
        s += "<text x=\"16\" y=\"" + num(mt + ph / 2) +
             "\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
             num(mt + ph / 2) + ")\" text-anchor=\"middle\">" + escape(y_label_) + "</text>\n";
        s += "<text x=\"" + num(ml) + "\" y=\"" + num(H - mb + 16) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + num(xmin) + "</text>\n";
        s += "<text x=\"" + num(ml + pw) + "\" y=\"" + num(H - mb + 16) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(xmax) +
             "</text>\n";
        s += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(mt + ph) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(ymin) +
             "</text>\n";
        s += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(mt + 10) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(ymax) +
             "</text>\n";

        for (std::size_t k = 0; k < series_.size(); ++k) {
            const auto& ser = series_[k];
            const char* color = palette[k % 6];
            if (!ser.x.empty()) {
                std::string pts;
                for (std::size_t i = 0; i < ser.x.size(); ++i) {
                    if (i) pts += " ";
                    pts += num(px(ser.x[i])) + "," + num(py(ser.y[i]));
                }
                s += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                     "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
            }
            const double ly = mt + 16 + 18 * static_cast<double>(k);
            s += "<line x1=\"" + num(W - mr + 10) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
                 num(W - mr + 34) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color +
                 "\" stroke-width=\"2\"/>\n";
            s += "<text x=\"" + num(W - mr + 40) + "\" y=\"" + num(ly) +
                 "\" font-family=\"sans-serif\" font-size=\"12\">" + escape(ser.label) +
                 "</text>\n";
        }
        s += "</svg>\n";
        return s;
    }

private:
    static std::string escape(const std::string& in) {
        std::string out;
        for (char c : in) {
            if (c == '&') out += "&amp;";
            else if (c == '<') out += "&lt;";
            else if (c == '>') out += "&gt;";
            else out += c;
        }
        return out;
    }

    std::string title_, x_label_, y_label_;
    std::vector<PlotSeries> series_;
};

} // namespace l2t
