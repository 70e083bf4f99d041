#pragma once

#include <string>
#include <vector>

#include "hz/probe.hpp"
#include "hz/ssl.hpp"

namespace hz {

std::string csv_escape(const std::string& field);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);

// Minimal SVG 1.1 output, self-contained (inline styling, no scripts).
struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           int width = 720, int height = 420);

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, int width = 720, int height = 420);

void write_ssl_history_csv(const std::string& path, const std::vector<SSLEpoch>& history);
void write_probe_csv(const std::string& path, const std::string& zoo,
                     const std::vector<ProbeCell>& cells);
void write_ood_csv(const std::string& path, const std::string& source, const std::string& target,
                   const std::vector<OodCell>& cells);

// Aggregates history.csv / probe.csv / ood.csv found in the given run
// directories into one markdown document; runs sharing task sets are laid
// out side by side.
std::string markdown_report(const std::vector<std::string>& run_dirs);

}  // namespace hz
