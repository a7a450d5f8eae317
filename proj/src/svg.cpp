#include "beatmap/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace beatmap::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#ad494a"};
constexpr std::size_t kPaletteSize = std::size(kPalette);

std::string color_for(std::size_t label, std::size_t n_classes) {
    if (n_classes <= kPaletteSize) {
        return kPalette[label % kPaletteSize];
    }
    // Many classes (record ids): spread hues evenly.
    const int hue = static_cast<int>(360.0 * static_cast<double>(label) / static_cast<double>(n_classes));
    return "hsl(" + std::to_string(hue) + ",70%,45%)";
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::ofstream open(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

} // namespace

void write_scatter(const std::filesystem::path& path, const Matrix& y, std::span<const int> labels,
                   const std::vector<std::string>& class_names, const std::string& title) {
    constexpr double kSize = 600.0;
    constexpr double kPad = 30.0;
    constexpr double kLegend = 140.0;
    const bool legend = !labels.empty() && class_names.size() <= kPaletteSize;
    double lo0 = 0, hi0 = 1, lo1 = 0, hi1 = 1;
    if (y.rows() > 0) {
        lo0 = hi0 = y(0, 0);
        lo1 = hi1 = y(0, 1);
        for (std::size_t i = 1; i < y.rows(); ++i) {
            lo0 = std::min(lo0, y(i, 0));
            hi0 = std::max(hi0, y(i, 0));
            lo1 = std::min(lo1, y(i, 1));
            hi1 = std::max(hi1, y(i, 1));
        }
    }
    const double span0 = hi0 > lo0 ? hi0 - lo0 : 1.0;
    const double span1 = hi1 > lo1 ? hi1 - lo1 : 1.0;

    auto out = open(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kSize + (legend ? kLegend : 0.0))
        << "\" height=\"" << num(kSize) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << num(kPad) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title)
        << "</text>\n";
    for (std::size_t i = 0; i < y.rows(); ++i) {
        const double px = kPad + (y(i, 0) - lo0) / span0 * (kSize - 2 * kPad);
        const double py = kSize - kPad - (y(i, 1) - lo1) / span1 * (kSize - 2 * kPad);
        const std::string fill = labels.empty() ? "#333333" : color_for(static_cast<std::size_t>(labels[i]), class_names.size());
        out << "<circle cx=\"" << num(px) << "\" cy=\"" << num(py) << "\" r=\"1.5\" fill=\"" << fill
            << "\" fill-opacity=\"0.6\"/>\n";
    }
    if (legend) {
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            const double ly = 40.0 + 18.0 * static_cast<double>(c);
            out << "<rect x=\"" << num(kSize + 10) << "\" y=\"" << num(ly - 10) << "\" width=\"12\" height=\"12\" fill=\""
                << color_for(c, class_names.size()) << "\"/>\n"
                << "<text x=\"" << num(kSize + 28) << "\" y=\"" << num(ly) << "\" font-family=\"sans-serif\" font-size=\"12\">"
                << escape(class_names[c]) << "</text>\n";
        }
    }
    out << "</svg>\n";
}

void write_cluster_panels(const std::filesystem::path& path, const beats::BeatMatrix& beats,
                          const clusters::ClusterReport& report, const std::string& title) {
    constexpr double kPanelW = 240.0;
    constexpr double kPanelH = 160.0;
    constexpr std::size_t kColumns = 4;
    const std::size_t n = report.clusters.size();
    const std::size_t rows = (n + kColumns - 1) / kColumns;
    const std::size_t width = beats.waveforms.cols();

    auto out = open(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kPanelW * kColumns) << "\" height=\""
        << num(30.0 + kPanelH * static_cast<double>(std::max<std::size_t>(rows, 1))) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title) << "</text>\n";
    for (std::size_t c = 0; c < n; ++c) {
        const auto& cl = report.clusters[c];
        const double ox = kPanelW * static_cast<double>(c % kColumns);
        const double oy = 30.0 + kPanelH * static_cast<double>(c / kColumns);
        double lo = 0.0, hi = 0.0;
        bool first = true;
        auto widen = [&](double v) {
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
        };
        for (std::size_t i : cl.representatives) {
            for (double v : beats.waveforms.row(i)) {
                widen(v);
            }
        }
        for (std::size_t s = 0; s < width; ++s) {
            const double sd = std::sqrt(cl.variance[s]);
            widen(cl.mean[s] - sd);
            widen(cl.mean[s] + sd);
        }
        const double range = hi > lo ? hi - lo : 1.0;
        auto px = [&](std::size_t s) { return ox + 10.0 + (kPanelW - 20.0) * static_cast<double>(s) / static_cast<double>(width - 1); };
        auto py = [&](double v) { return oy + kPanelH - 15.0 - (v - lo) / range * (kPanelH - 35.0); };

        const auto dom = clusters::dominant_label(cl);
        out << "<text x=\"" << num(ox + 10) << "\" y=\"" << num(oy + 14)
            << "\" font-family=\"sans-serif\" font-size=\"11\">Cluster " << cl.id << " (n=" << cl.size() << ", "
            << beats::to_string(dom.aami) << " " << num(100.0 * dom.purity) << "%)</text>\n";
        std::ostringstream band;
        for (std::size_t s = 0; s < width; ++s) {
            band << (s == 0 ? "M" : "L") << num(px(s)) << ',' << num(py(cl.mean[s] + std::sqrt(cl.variance[s])));
        }
        for (std::size_t s = width; s-- > 0;) {
            band << 'L' << num(px(s)) << ',' << num(py(cl.mean[s] - std::sqrt(cl.variance[s])));
        }
        out << "<path d=\"" << band.str() << "Z\" fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\"/>\n";
        for (std::size_t i : cl.representatives) {
            std::ostringstream line;
            const auto w = beats.waveforms.row(i);
            for (std::size_t s = 0; s < width; ++s) {
                line << (s == 0 ? "M" : "L") << num(px(s)) << ',' << num(py(w[s]));
            }
            out << "<path d=\"" << line.str() << "\" fill=\"none\" stroke=\"#999999\" stroke-width=\"0.6\"/>\n";
        }
        std::ostringstream mean;
        for (std::size_t s = 0; s < width; ++s) {
            mean << (s == 0 ? "M" : "L") << num(px(s)) << ',' << num(py(cl.mean[s]));
        }
        out << "<path d=\"" << mean.str() << "\" fill=\"none\" stroke=\"#08306b\" stroke-width=\"1.5\"/>\n";
    }
    out << "</svg>\n";
}

} // namespace beatmap::svg
