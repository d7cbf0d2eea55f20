#include "vsr/hypotheses.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "vsr/error.hpp"

namespace vsr {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto t = line.find('\t', start);
        out.push_back(line.substr(start, t - start));
        if (t == std::string::npos) break;
        start = t + 1;
    }
    return out;
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

}  // namespace

HypothesisSet read_hypotheses(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open hypothesis file " + path.string());
    HypothesisSet out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
        std::vector<std::string> f = split_tabs(line);
        if (f[0].empty()) throw DataError(where + "empty utterance id");
        HypothesisLine h;
        if (f.size() == 1 || f.size() == 2) {
            h.text = f.size() == 2 ? f[1] : "";
        } else if (f.size() == 7) {
            std::size_t rank = 0;
            try {
                rank = std::stoul(f[1]);
                h.combined = std::stod(f[2]);
            } catch (const std::exception&) {
                throw DataError(where + "malformed n-best fields");
            }
            if (rank != 1) continue;
            h.text = f[6];
        } else {
            throw DataError(where + "expected 2 or 7 tab-separated fields");
        }
        if (!out.emplace(f[0], std::move(h)).second) throw DataError(where + "duplicate utterance id " + f[0]);
    }
    return out;
}

std::string format_hypotheses(const std::map<std::string, std::string>& texts) {
    std::ostringstream os;
    for (const auto& [id, text] : texts) os << id << '\t' << text << '\n';
    return os.str();
}

std::string format_nbest(const std::vector<NBestEntry>& entries) {
    std::ostringstream os;
    for (const NBestEntry& e : entries)
        for (std::size_t r = 0; r < e.hyps.size(); ++r) {
            const Hypothesis& h = e.hyps[r];
            os << e.id << '\t' << r + 1 << '\t' << format_double(h.combined) << '\t' << format_double(h.att) << '\t'
               << format_double(h.ctc) << '\t' << format_double(h.lm) << '\t' << e.texts[r] << '\n';
        }
    return os.str();
}

}  // namespace vsr
