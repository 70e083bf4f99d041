#include "hz/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace hz {

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw StorageError("csv: cannot write " + path);
    for (size_t i = 0; i < header.size(); ++i)
        out << (i ? "," : "") << csv_escape(header[i]);
    out << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_escape(row[i]);
        out << "\n";
    }
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("csv: cannot open " + path);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    CsvTable t;
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    bool first = true;

    auto end_field = [&] {
        fields.push_back(std::move(cur));
        cur.clear();
    };
    auto end_row = [&] {
        end_field();
        if (fields.size() == 1 && fields[0].empty()) {  // blank line
            fields.clear();
            return;
        }
        if (first) {
            t.header = std::move(fields);
            first = false;
        } else {
            t.rows.push_back(std::move(fields));
        }
        fields.clear();
    };

    // Newlines only terminate a record outside quotes, so quoted fields may
    // span lines.
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            // swallowed; the paired \n ends the row
        } else if (c == '\n') {
            end_row();
        } else {
            cur += c;
        }
    }
    if (!cur.empty() || !fields.empty()) end_row();
    return t;
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt(double v, int prec = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct Bounds {
    double lo = 0.0, hi = 1.0;

    void grow(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    static Bounds of(const std::vector<Series>& series, bool use_x) {
        Bounds b;
        b.lo = std::numeric_limits<double>::infinity();
        b.hi = -std::numeric_limits<double>::infinity();
        for (const auto& s : series)
            for (double v : use_x ? s.x : s.y) b.grow(v);
        if (!std::isfinite(b.lo)) {
            b.lo = 0.0;
            b.hi = 1.0;
        }
        if (b.hi == b.lo) b.hi = b.lo + 1.0;
        return b;
    }
};

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           int width, int height) {
    const double ml = 64, mr = 16, mt = 36, mb = 48;
    const double pw = width - ml - mr, ph = height - mt - mb;
    Bounds bx = Bounds::of(series, true);
    Bounds by = Bounds::of(series, false);
    auto px = [&](double v) { return ml + (v - bx.lo) / (bx.hi - bx.lo) * pw; };
    auto py = [&](double v) { return mt + ph - (v - by.lo) / (by.hi - by.lo) * ph; };

    std::ostringstream s;
    s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"14\">" << xml_escape(title) << "</text>\n";
    // axes
    s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = bx.lo + (bx.hi - bx.lo) * i / 4.0;
        const double fy = by.lo + (by.hi - by.lo) * i / 4.0;
        s << "<text x=\"" << px(fx) << "\" y=\"" << mt + ph + 16
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(fx, 3)
          << "</text>\n";
        s << "<text x=\"" << ml - 6 << "\" y=\"" << py(fy) + 3
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(fy, 3)
          << "</text>\n";
        if (i > 0)
            s << "<line x1=\"" << ml << "\" y1=\"" << py(fy) << "\" x2=\"" << ml + pw << "\" y2=\""
              << py(fy) << "\" stroke=\"#dddddd\"/>\n";
    }
    s << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << xml_escape(x_label) << "</text>\n";
    s << "<text x=\"14\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 "
      << mt + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
    for (size_t k = 0; k < series.size(); ++k) {
        const Series& ser = series[k];
        const char* color = kPalette[k % 8];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) {
            if (!std::isfinite(ser.y[i])) continue;
            s << fmt(px(ser.x[i]), 6) << "," << fmt(py(ser.y[i]), 6) << " ";
        }
        s << "\"/>\n";
        const double lx = ml + pw - 150, ly = mt + 14 + 16 * double(k);
        s << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 18 << "\" y2=\""
          << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
          << "<text x=\"" << lx + 24 << "\" y=\"" << ly
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(ser.label)
          << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, int width, int height) {
    const double ml = 64, mr = 16, mt = 36, mb = 64;
    const double pw = width - ml - mr, ph = height - mt - mb;
    double lo = 0.0, hi = 0.0;
    for (double v : values)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi == lo) hi = lo + 1.0;
    auto py = [&](double v) { return mt + ph - (v - lo) / (hi - lo) * ph; };
    const size_t n = std::max<size_t>(1, values.size());
    const double slot = pw / double(n);

    std::ostringstream s;
    s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"14\">" << xml_escape(title) << "</text>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << py(0.0) << "\" x2=\"" << ml + pw << "\" y2=\""
      << py(0.0) << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fy = lo + (hi - lo) * i / 4.0;
        s << "<text x=\"" << ml - 6 << "\" y=\"" << py(fy) + 3
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(fy, 3)
          << "</text>\n";
    }
    for (size_t i = 0; i < values.size(); ++i) {
        const double v = std::isfinite(values[i]) ? values[i] : 0.0;
        const double x = ml + slot * double(i) + slot * 0.15;
        const double y0 = py(std::max(0.0, v)), y1 = py(std::min(0.0, v));
        s << "<rect x=\"" << fmt(x, 6) << "\" y=\"" << fmt(y0, 6) << "\" width=\""
          << fmt(slot * 0.7, 6) << "\" height=\"" << fmt(std::max(0.5, y1 - y0), 6)
          << "\" fill=\"" << kPalette[i % 8] << "\"/>\n";
        s << "<text x=\"" << fmt(x + slot * 0.35, 6) << "\" y=\"" << mt + ph + 16
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
          << xml_escape(i < labels.size() ? labels[i] : "") << "</text>\n";
        if (std::isfinite(values[i]))
            s << "<text x=\"" << fmt(x + slot * 0.35, 6) << "\" y=\"" << fmt(y0 - 4, 6)
              << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
              << fmt(values[i], 3) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

void write_ssl_history_csv(const std::string& path, const std::vector<SSLEpoch>& history) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(history.size());
    for (const auto& h : history)
        rows.push_back({std::to_string(h.epoch), fmt(h.total_loss, 9), fmt(h.mse_part, 9),
                        fmt(h.contrast_part, 9), fmt(h.val_r2, 9), fmt(h.val_loss, 9)});
    write_csv(path, {"epoch", "loss", "mse", "contrast", "val_r2", "val_loss"}, rows);
}

void write_probe_csv(const std::string& path, const std::string& zoo,
                     const std::vector<ProbeCell>& cells) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(cells.size());
    for (const auto& c : cells)
        rows.push_back({zoo, c.source, c.task, c.metric, fmt(c.value, 9), fmt(c.tau, 9),
                        fmt(c.alpha, 9), std::to_string(c.n_train), std::to_string(c.n_val),
                        std::to_string(c.n_test)});
    write_csv(path,
              {"zoo", "source", "task", "metric", "value", "tau", "alpha", "n_train", "n_val",
               "n_test"},
              rows);
}

void write_ood_csv(const std::string& path, const std::string& source, const std::string& target,
                   const std::vector<OodCell>& cells) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(cells.size());
    for (const auto& c : cells)
        rows.push_back({source, target, c.task, fmt(c.tau, 9), fmt(c.r2, 9), std::to_string(c.n)});
    write_csv(path, {"source", "target", "task", "tau", "r2", "n"}, rows);
}

std::string markdown_report(const std::vector<std::string>& run_dirs) {
    std::ostringstream md;
    md << "# Run report\n\n";
    if (run_dirs.empty()) {
        md << "No run directories were given; nothing to summarize.\n";
        return md.str();
    }

    // probe tables: group columns by run for rows shared across runs
    std::vector<std::string> probe_runs;
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::string>> probe_cells;
    for (const auto& dir : run_dirs) {
        const std::string p = dir + "/probe.csv";
        if (!fs::exists(p)) continue;
        probe_runs.push_back(dir);
        CsvTable t = read_csv(p);
        for (const auto& row : t.rows) {
            if (row.size() < 5) continue;
            probe_cells[{row[1], row[2]}][dir] = row[4] + " (" + row[3] + ")";
        }
    }
    if (!probe_runs.empty()) {
        md << "## Probe metrics\n\n| source | task |";
        for (const auto& r : probe_runs) md << " " << fs::path(r).filename().string() << " |";
        md << "\n|---|---|";
        for (size_t i = 0; i < probe_runs.size(); ++i) md << "---|";
        md << "\n";
        for (const auto& [key, per_run] : probe_cells) {
            md << "| " << key.first << " | " << key.second << " |";
            for (const auto& r : probe_runs) {
                auto it = per_run.find(r);
                md << " " << (it == per_run.end() ? "-" : it->second) << " |";
            }
            md << "\n";
        }
        md << "\n";
    }

    bool any_history = false;
    for (const auto& dir : run_dirs) {
        const std::string p = dir + "/history.csv";
        if (!fs::exists(p)) continue;
        if (!any_history) {
            md << "## Training runs\n\n| run | epochs | final loss | best val R2 |\n|---|---|---|---|\n";
            any_history = true;
        }
        CsvTable t = read_csv(p);
        double best = -std::numeric_limits<double>::infinity();
        std::string final_loss = "-";
        for (const auto& row : t.rows) {
            if (row.size() < 5) continue;
            best = std::max(best, std::strtod(row[4].c_str(), nullptr));
            final_loss = row[1];
        }
        md << "| " << fs::path(dir).filename().string() << " | " << t.rows.size() << " | "
           << final_loss << " | " << (std::isfinite(best) ? fmt(best, 6) : "-") << " |\n";
    }
    if (any_history) md << "\n";

    bool any_ood = false;
    for (const auto& dir : run_dirs) {
        const std::string p = dir + "/ood.csv";
        if (!fs::exists(p)) continue;
        if (!any_ood) {
            md << "## Transfer\n\n| source | target | task | tau | R2 | n |\n|---|---|---|---|---|---|\n";
            any_ood = true;
        }
        CsvTable t = read_csv(p);
        for (const auto& row : t.rows) {
            if (row.size() < 6) continue;
            md << "| " << row[0] << " | " << row[1] << " | " << row[2] << " | " << row[3] << " | "
               << row[4] << " | " << row[5] << " |\n";
        }
    }
    if (!any_ood && probe_runs.empty() && !any_history)
        md << "The given directories contain no recognized CSV outputs.\n";
    return md.str();
}

}  // namespace hz
