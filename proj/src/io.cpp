#include "bnbcp/io.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace bnbcp {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot open file for writing: " + path.string());
    }
    out << std::setprecision(17);
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open file: " + path.string());
    }
    return in;
}

std::vector<double> parse_csv_row(const std::string& line, int line_no,
                                  const std::filesystem::path& path) {
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t pos = 0;
            values.push_back(std::stod(cell, &pos));
            if (pos != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw ParseError(path.string() + " line " +
                             std::to_string(line_no) +
                             ": non-numeric cell '" + cell + "'");
        }
    }
    return values;
}

} // namespace

void write_factor_csv(const std::filesystem::path& path,
                      const matrixd& matrix) {
    auto out = open_out(path);
    for (int r = 0; r < matrix.cols(); ++r) {
        out << (r ? "," : "") << "factor_" << r;
    }
    out << '\n';
    for (int j = 0; j < matrix.rows(); ++j) {
        for (int r = 0; r < matrix.cols(); ++r) {
            out << (r ? "," : "") << matrix(j, r);
        }
        out << '\n';
    }
}

matrixd read_factor_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("factor_0", 0) != 0) {
        throw FormatError(path.string() + ": missing factor header row");
    }
    const std::size_t cols =
        static_cast<std::size_t>(
            std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto row = parse_csv_row(line, line_no, path);
        if (row.size() != cols) {
            throw ParseError(path.string() + " line " +
                             std::to_string(line_no) + ": expected " +
                             std::to_string(cols) + " cells, got " +
                             std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    matrixd m(static_cast<Eigen::Index>(rows.size()),
              static_cast<Eigen::Index>(cols));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        for (std::size_t r = 0; r < cols; ++r) {
            m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(r)) =
                rows[j][r];
        }
    }
    return m;
}

void write_vector_csv(const std::filesystem::path& path,
                      const std::string& header, const vectord& values) {
    auto out = open_out(path);
    out << header << '\n';
    for (int i = 0; i < values.size(); ++i) {
        out << values[i] << '\n';
    }
}

vectord read_vector_csv(const std::filesystem::path& path,
                        const std::string& header) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw FormatError(path.string() + ": expected header '" + header +
                          "'");
    }
    std::vector<double> values;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto row = parse_csv_row(line, line_no, path);
        if (row.size() != 1) {
            throw ParseError(path.string() + " line " +
                             std::to_string(line_no) +
                             ": expected a single cell");
        }
        values.push_back(row[0]);
    }
    return Eigen::Map<const vectord>(values.data(),
                                     static_cast<Eigen::Index>(values.size()));
}

void save_model(const std::filesystem::path& dir,
                const ModelState<double>& model) {
    std::filesystem::create_directories(dir);
    for (int k = 0; k < model.num_modes(); ++k) {
        write_factor_csv(dir / ("mode_" + std::to_string(k) + ".csv"),
                         model.factors[static_cast<std::size_t>(k)]);
    }
    write_vector_csv(dir / "lambda.csv", "lambda", model.lambda);
    write_vector_csv(dir / "p.csv", "p", model.p);
}

ModelState<double> load_model(const std::filesystem::path& dir,
                              int num_modes) {
    ModelState<double> model;
    model.factors.reserve(static_cast<std::size_t>(num_modes));
    for (int k = 0; k < num_modes; ++k) {
        model.factors.push_back(
            read_factor_csv(dir / ("mode_" + std::to_string(k) + ".csv")));
    }
    model.lambda = read_vector_csv(dir / "lambda.csv", "lambda");
    model.p = read_vector_csv(dir / "p.csv", "p");
    return model;
}

} // namespace bnbcp
