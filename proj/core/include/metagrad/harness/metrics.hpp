#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace metagrad::harness {

/// One row of the per-run delimited metrics file. "iter" rows carry training
/// quantities; "epoch" rows additionally carry the fixed-set validation
/// numbers; a "diverged" row terminates a run that hit a non-finite loss.
struct MetricsRecord {
    std::string kind = "iter"; // iter | epoch | diverged
    std::string run_id;        // config digest (hex)
    std::uint64_t seed = 0;
    int epoch = 0;
    std::int64_t iteration = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double beta = 0.0;
    std::string order = "second"; // first | second
    double wall_ms = 0.0;
    double val_acc = std::nan("");
    double val_loss = std::nan("");
    std::vector<double> support_losses;
    std::vector<double> target_losses;
    std::vector<double> v_weights;
};

/// Tab-separated with a versioned header; vector fields are
/// semicolon-joined. Columns round-trip losslessly through %.17g.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path, bool append = false);
    void write(const MetricsRecord& rec);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

std::vector<MetricsRecord> parse_metrics_file(const std::string& path);

std::string metrics_header();

} // namespace metagrad::harness
