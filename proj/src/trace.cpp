#include "bnbcp/evaluation.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace bnbcp {

void FitTrace::write_csv(std::ostream& out) const {
    out << kCsvHeader << '\n';
    out << std::setprecision(17);
    for (const TraceRow& r : rows) {
        out << r.iteration << ',' << r.elapsed_seconds << ','
            << r.heldout_loglik << ',' << r.heldout_mae << ','
            << r.effective_rank << '\n';
    }
}

void FitTrace::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot open trace file for writing: " +
                          path.string());
    }
    write_csv(out);
}

FitTrace FitTrace::read_csv(std::istream& in) {
    FitTrace trace;
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) {
        throw FormatError("trace file missing expected header '" +
                          std::string(kCsvHeader) + "'");
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        TraceRow row;
        char c1, c2, c3, c4;
        if (!(ss >> row.iteration >> c1 >> row.elapsed_seconds >> c2 >>
              row.heldout_loglik >> c3 >> row.heldout_mae >> c4 >>
              row.effective_rank) ||
            c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',') {
            throw ParseError("trace line " + std::to_string(line_no) +
                             ": malformed row '" + line + "'");
        }
        trace.rows.push_back(row);
    }
    return trace;
}

FitTrace FitTrace::read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open trace file: " + path.string());
    }
    return read_csv(in);
}

} // namespace bnbcp
