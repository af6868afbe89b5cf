#include "clab/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace clab {

namespace {

constexpr double kPanelW = 380.0, kPanelH = 300.0;
constexpr double kMarginL = 60.0, kMarginT = 50.0, kMarginB = 45.0, kGap = 80.0;
constexpr double kWidth = kMarginL + kPanelW + kGap + kPanelW + 30.0;
constexpr double kHeight = kMarginT + kPanelH + kMarginB;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Panel {
    double x0;                    // left edge in svg coords
    double xmin, xmax;            // data range, x
    double ymin, ymax;            // data range, y (log10 values when log_y)
    bool log_y = false;

    double sx(double x) const { return x0 + (x - xmin) / (xmax - xmin) * kPanelW; }
    double sy(double y) const {
        double v = log_y ? std::log10(y) : y;
        return kMarginT + kPanelH - (v - ymin) / (ymax - ymin) * kPanelH;
    }
};

// largest "nice" step (1/2/5 x 10^k) giving at most ~6 intervals
double nice_step(double span) {
    double raw = span / 5.0;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * m >= raw) return mag * m;
    }
    return mag * 10.0;
}

void draw_frame(std::ostringstream& out, const Panel& p, const std::string& title,
                const std::string& ylabel) {
    out << "<rect x=\"" << num(p.x0) << "\" y=\"" << num(kMarginT) << "\" width=\"" << num(kPanelW)
        << "\" height=\"" << num(kPanelH)
        << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << num(p.x0 + kPanelW / 2) << "\" y=\"" << num(kMarginT - 16)
        << "\" text-anchor=\"middle\" font-size=\"15\" font-family=\"sans-serif\">" << title
        << "</text>\n";
    out << "<text x=\"" << num(p.x0 - 44) << "\" y=\"" << num(kMarginT + kPanelH / 2)
        << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" transform=\"rotate(-90 "
        << num(p.x0 - 44) << " " << num(kMarginT + kPanelH / 2) << ")\">" << ylabel << "</text>\n";
    out << "<text x=\"" << num(p.x0 + kPanelW / 2) << "\" y=\"" << num(kMarginT + kPanelH + 34)
        << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">generation</text>\n";

    // x ticks at integer generations, thinned to at most ~10 labels
    int lo = static_cast<int>(std::ceil(p.xmin)), hi = static_cast<int>(std::floor(p.xmax));
    int step = std::max(1, (hi - lo) / 10 + ((hi - lo) % 10 ? 1 : 0));
    for (int g = lo; g <= hi; g += step) {
        double x = p.sx(g);
        out << "<line x1=\"" << num(x) << "\" y1=\"" << num(kMarginT + kPanelH) << "\" x2=\""
            << num(x) << "\" y2=\"" << num(kMarginT + kPanelH + 5)
            << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
        out << "<text x=\"" << num(x) << "\" y=\"" << num(kMarginT + kPanelH + 18)
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << g
            << "</text>\n";
    }

    if (p.log_y) {
        // one tick per power of ten across the padded range
        for (int e = static_cast<int>(std::ceil(p.ymin)); e <= static_cast<int>(std::floor(p.ymax));
             ++e) {
            double y = p.sy(std::pow(10.0, e));
            out << "<line x1=\"" << num(p.x0 - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(p.x0)
                << "\" y2=\"" << num(y) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
            out << "<text x=\"" << num(p.x0 - 8) << "\" y=\"" << num(y + 4)
                << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
                << num(std::pow(10.0, e)) << "</text>\n";
        }
    } else {
        double step_y = nice_step(p.ymax - p.ymin);
        for (double v = std::ceil(p.ymin / step_y) * step_y; v <= p.ymax + 1e-12; v += step_y) {
            double y = p.sy(v);
            out << "<line x1=\"" << num(p.x0 - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(p.x0)
                << "\" y2=\"" << num(y) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
            out << "<text x=\"" << num(p.x0 - 8) << "\" y=\"" << num(y + 4)
                << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << num(v)
                << "</text>\n";
        }
    }
}

void draw_series(std::ostringstream& out, const Panel& p,
                 const std::vector<GenerationRecord>& recs, bool rank_panel,
                 const std::string& color, const std::string& dash) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"";
    if (!dash.empty()) out << " stroke-dasharray=\"" << dash << "\"";
    out << " points=\"";
    for (std::size_t i = 0; i < recs.size(); ++i) {
        double v = rank_panel ? recs[i].effective_rank : recs[i].perplexity;
        if (i) out << ' ';
        out << num(p.sx(recs[i].generation)) << ',' << num(p.sy(v));
    }
    out << "\"/>\n";
    for (const auto& r : recs) {
        double v = rank_panel ? r.effective_rank : r.perplexity;
        out << "<circle cx=\"" << num(p.sx(r.generation)) << "\" cy=\"" << num(p.sy(v))
            << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
}

}  // namespace

std::string render_plot_svg(const std::vector<GenerationRecord>& baseline,
                            const std::vector<GenerationRecord>* mncis) {
    std::vector<const std::vector<GenerationRecord>*> series{&baseline};
    if (mncis) series.push_back(mncis);
    for (const auto* s : series) {
        if (s->size() < 2) throw std::invalid_argument("render_plot: need >= 2 points per series");
        for (const auto& r : *s) {
            if (!(std::isfinite(r.effective_rank) && std::isfinite(r.perplexity) &&
                  r.perplexity > 0.0)) {
                throw std::invalid_argument("render_plot: non-finite or non-positive point");
            }
        }
    }

    double xmin = 1e300, xmax = -1e300, rmin = 1e300, rmax = -1e300, pmin = 1e300, pmax = -1e300;
    for (const auto* s : series) {
        for (const auto& r : *s) {
            xmin = std::min(xmin, static_cast<double>(r.generation));
            xmax = std::max(xmax, static_cast<double>(r.generation));
            rmin = std::min(rmin, r.effective_rank);
            rmax = std::max(rmax, r.effective_rank);
            pmin = std::min(pmin, r.perplexity);
            pmax = std::max(pmax, r.perplexity);
        }
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    double rpad = (rmax - rmin) * 0.08 + 1e-9;
    Panel left{kMarginL, xmin, xmax, rmin - rpad, rmax + rpad, false};
    // log panel: pad to the enclosing powers of ten so decade ticks exist
    double lmin = std::floor(std::log10(pmin)), lmax = std::ceil(std::log10(pmax));
    if (lmax == lmin) lmax = lmin + 1.0;
    Panel right{kMarginL + kPanelW + kGap, xmin, xmax, lmin, lmax, true};

    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\""
        << num(kHeight) << "\" viewBox=\"0 0 " << num(kWidth) << " " << num(kHeight) << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
        << "\" fill=\"#ffffff\"/>\n";

    draw_frame(out, left, "Global Spectral Topology", "effective rank");
    draw_frame(out, right, "Semantic Coherence (PPL)", "perplexity (log)");

    const std::string base_color = "#c0392b", mncis_color = "#2471a3";
    draw_series(out, left, baseline, true, base_color, "");
    draw_series(out, right, baseline, false, base_color, "");
    if (mncis) {
        draw_series(out, left, *mncis, true, mncis_color, "6,3");
        draw_series(out, right, *mncis, false, mncis_color, "6,3");
    }

    // legend, top-right of the left panel
    double lx = kMarginL + kPanelW - 110, ly = kMarginT + 14;
    out << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 26)
        << "\" y2=\"" << num(ly) << "\" stroke=\"" << base_color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(lx + 32) << "\" y=\"" << num(ly + 4)
        << "\" font-size=\"12\" font-family=\"sans-serif\">Baseline</text>\n";
    if (mncis) {
        out << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly + 18) << "\" x2=\"" << num(lx + 26)
            << "\" y2=\"" << num(ly + 18) << "\" stroke=\"" << mncis_color
            << "\" stroke-width=\"2\" stroke-dasharray=\"6,3\"/>\n";
        out << "<text x=\"" << num(lx + 32) << "\" y=\"" << num(ly + 22)
            << "\" font-size=\"12\" font-family=\"sans-serif\">MNCIS</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

void render_plot(const std::vector<GenerationRecord>& baseline,
                 const std::vector<GenerationRecord>* mncis, const std::string& path) {
    std::string svg = render_plot_svg(baseline, mncis);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("render_plot: cannot open " + path);
    f << svg;
    if (!f) throw std::runtime_error("render_plot: write failed for " + path);
}

}  // namespace clab
