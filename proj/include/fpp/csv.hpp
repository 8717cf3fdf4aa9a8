#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fpp/errors.hpp"

namespace fpp {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Plain CSV with '#' comment headers.  Every file carries the config hash and
// seed so a rerun can be byte-compared.
class CsvWriter {
  public:
    void comment(const std::string& key, const std::string& value) {
        comments_ += "# " + key + " = " + value + "\n";
    }
    void comment(const std::string& key, double value) { comment(key, format_double(value)); }

    void header(const std::vector<std::string>& cols) {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (i) body_ += ',';
            body_ += cols[i];
        }
        body_ += '\n';
    }

    void row(const std::vector<double>& vals) {
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i) body_ += ',';
            body_ += format_double(vals[i]);
        }
        body_ += '\n';
    }

    void row_mixed(const std::vector<std::string>& vals) {
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i) body_ += ',';
            body_ += vals[i];
        }
        body_ += '\n';
    }

    std::string str() const { return comments_ + body_; }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot open output file " + path);
        out << str();
    }

  private:
    std::string comments_;
    std::string body_;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        throw ValidationError("csv column '" + name + "' not found");
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read csv file " + path);
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!have_header) {
            t.columns = cells;
            have_header = true;
            continue;
        }
        std::vector<double> vals;
        for (const auto& c : cells) vals.push_back(std::strtod(c.c_str(), nullptr));
        t.rows.push_back(std::move(vals));
    }
    return t;
}

}  // namespace fpp
