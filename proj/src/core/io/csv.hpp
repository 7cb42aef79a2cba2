#pragma once

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "../error.hpp"

namespace fe2e {

// Deterministic CSV writer: fixed %.10g formatting, no locale dependence.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::trunc), path_(path) {
        if (!out_) throw_io("csv: cannot open for writing: " + path);
    }

    void header(std::initializer_list<std::string> names) {
        bool first = true;
        for (const auto& n : names) {
            if (!first) out_ << ",";
            out_ << n;
            first = false;
        }
        out_ << "\n";
    }

    CsvWriter& field(const std::string& v) {
        sep();
        out_ << v;
        return *this;
    }

    CsvWriter& field(double v) {
        sep();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        out_ << buf;
        return *this;
    }

    CsvWriter& field(int v) {
        sep();
        out_ << v;
        return *this;
    }

    void end_row() {
        out_ << "\n";
        row_started_ = false;
        if (!out_) throw_io("csv: write failed: " + path_);
    }

private:
    void sep() {
        if (row_started_) out_ << ",";
        row_started_ = true;
    }

    std::ofstream out_;
    std::string path_;
    bool row_started_ = false;
};

}  // namespace fe2e
