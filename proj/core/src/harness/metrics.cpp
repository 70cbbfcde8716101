#include "metagrad/harness/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "metagrad/errors.hpp"

namespace metagrad::harness {

namespace {

constexpr const char* kVersionLine = "# metagrad-metrics v1";

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join(const std::vector<double>& v) {
    if (v.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += fmt(v[i]);
    }
    return out;
}

double parse_d(const std::string& s) {
    if (s == "nan") return std::nan("");
    return std::stod(s);
}

std::vector<double> parse_vec(const std::string& s) {
    std::vector<double> out;
    if (s == "-") return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) out.push_back(parse_d(item));
    return out;
}

} // namespace

std::string metrics_header() {
    return std::string(kVersionLine) +
           "\nkind\trun_id\tseed\tepoch\titeration\ttrain_loss\ttrain_acc\tbeta\torder\t"
           "wall_ms\tval_acc\tval_loss\tsupport_losses\ttarget_losses\tv_weights";
}

MetricsWriter::MetricsWriter(const std::string& path, bool append)
    : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw IoError("metrics: cannot open '" + path + "'");
    if (!append) out_ << metrics_header() << "\n";
}

void MetricsWriter::write(const MetricsRecord& r) {
    out_ << r.kind << '\t' << (r.run_id.empty() ? "-" : r.run_id) << '\t' << r.seed << '\t'
         << r.epoch << '\t' << r.iteration << '\t'
         << fmt(r.train_loss) << '\t' << fmt(r.train_acc) << '\t' << fmt(r.beta) << '\t'
         << r.order << '\t' << fmt(r.wall_ms) << '\t' << fmt(r.val_acc) << '\t'
         << fmt(r.val_loss) << '\t' << join(r.support_losses) << '\t' << join(r.target_losses)
         << '\t' << join(r.v_weights) << '\n';
    out_.flush();
    if (!out_) throw IoError("metrics: write failure on '" + path_ + "'");
}

std::vector<MetricsRecord> parse_metrics_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("metrics: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != kVersionLine)
        throw IoError("metrics: '" + path + "' missing version header");
    if (!std::getline(in, line)) throw IoError("metrics: '" + path + "' missing column header");

    std::vector<MetricsRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, '\t')) cols.push_back(c);
        if (cols.size() != 15)
            throw IoError("metrics: malformed row with " + std::to_string(cols.size()) +
                          " columns in '" + path + "'");
        MetricsRecord r;
        r.kind = cols[0];
        r.run_id = cols[1] == "-" ? "" : cols[1];
        r.seed = std::stoull(cols[2]);
        r.epoch = std::stoi(cols[3]);
        r.iteration = std::stoll(cols[4]);
        r.train_loss = parse_d(cols[5]);
        r.train_acc = parse_d(cols[6]);
        r.beta = parse_d(cols[7]);
        r.order = cols[8];
        r.wall_ms = parse_d(cols[9]);
        r.val_acc = parse_d(cols[10]);
        r.val_loss = parse_d(cols[11]);
        r.support_losses = parse_vec(cols[12]);
        r.target_losses = parse_vec(cols[13]);
        r.v_weights = parse_vec(cols[14]);
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace metagrad::harness
