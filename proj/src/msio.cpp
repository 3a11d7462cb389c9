#include "puf/msio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace puf {

namespace {

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void finalize_peaks(std::vector<Peak>& peaks) {
    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.mz < b.mz; });
    std::vector<Peak> merged;
    for (const auto& p : peaks) {
        if (!merged.empty() && merged.back().mz == p.mz)
            merged.back().intensity += p.intensity;
        else
            merged.push_back(p);
    }
    peaks = std::move(merged);
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Spectrum> parse_mgf(const std::string& text, ParseStats* stats) {
    std::vector<Spectrum> out;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    bool in_record = false;
    Spectrum cur;

    while (std::getline(ss, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line == "BEGIN IONS") {
            if (in_record) throw ParseError("nested BEGIN IONS", lineno);
            in_record = true;
            cur = Spectrum{};
            continue;
        }
        if (line == "END IONS") {
            if (!in_record) throw ParseError("END IONS without BEGIN IONS", lineno);
            in_record = false;
            if (cur.peaks.empty()) {
                if (stats) ++stats->skipped_empty_records;
                continue;
            }
            finalize_peaks(cur.peaks);
            out.push_back(std::move(cur));
            continue;
        }
        if (!in_record) continue;  // tolerate stray text between records
        auto eq = line.find('=');
        if (eq != std::string::npos && !std::isdigit(static_cast<unsigned char>(line[0]))) {
            std::string key = line.substr(0, eq);
            std::string val = line.substr(eq + 1);
            try {
                if (key == "TITLE") {
                    cur.title = val;
                } else if (key == "PEPMASS") {
                    // may carry a second intensity column
                    cur.precursor_mz = std::stod(val);
                } else if (key == "CHARGE") {
                    while (!val.empty() && (val.back() == '+' || val.back() == '-'))
                        val.pop_back();
                    cur.charge = std::stoi(val);
                } else if (key == "RTINSECONDS") {
                    cur.retention_time_sec = std::stod(val);
                }
                // unknown headers ignored
            } catch (const std::exception&) {
                throw ParseError("malformed header '" + key + "'", lineno);
            }
            continue;
        }
        // peak line: "mz intensity"
        std::stringstream ps(line);
        double mz, inten;
        if (!(ps >> mz >> inten)) throw ParseError("malformed peak line", lineno);
        if (inten > 0.0) cur.peaks.push_back({mz, inten});
    }
    if (in_record) throw ParseError("unterminated record (missing END IONS)", lineno);
    return out;
}

std::vector<Spectrum> load_mgf(const std::string& path, ParseStats* stats) {
    return parse_mgf(read_file(path), stats);
}

std::string serialize_mgf(const std::vector<Spectrum>& spectra) {
    std::string out;
    for (const auto& s : spectra) {
        out += "BEGIN IONS\n";
        out += "TITLE=" + s.title + "\n";
        out += "PEPMASS=" + fmt6(s.precursor_mz) + "\n";
        out += "CHARGE=" + std::to_string(s.charge) + "+\n";
        if (s.retention_time_sec)
            out += "RTINSECONDS=" + fmt6(*s.retention_time_sec) + "\n";
        for (const auto& p : s.peaks)
            out += fmt6(p.mz) + " " + fmt6(p.intensity) + "\n";
        out += "END IONS\n";
    }
    return out;
}

ProcessedSpectrum preprocess(const Spectrum& s, int n_max, IntensityTransform transform) {
    ProcessedSpectrum out;
    out.title = s.title;
    out.precursor_mz = s.precursor_mz;
    out.charge = s.charge;
    out.precursor_neutral_mass = s.precursor_mz * s.charge - s.charge * kProtonMass;

    std::vector<Peak> peaks = s.peaks;
    if (static_cast<int>(peaks.size()) > n_max) {
        std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
            return a.intensity > b.intensity;
        });
        peaks.resize(static_cast<std::size_t>(n_max));
        std::sort(peaks.begin(), peaks.end(),
                  [](const Peak& a, const Peak& b) { return a.mz < b.mz; });
    }
    double maxv = 0.0;
    for (auto& p : peaks) {
        if (transform == IntensityTransform::Sqrt) p.intensity = std::sqrt(p.intensity);
        maxv = std::max(maxv, p.intensity);
    }
    if (maxv > 0.0)
        for (auto& p : peaks) p.intensity /= maxv;
    out.peaks = std::move(peaks);
    return out;
}

std::vector<ProteinEntry> parse_fasta(const std::string& text, ParseStats* stats) {
    std::vector<ProteinEntry> out;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    bool any_header = false;
    while (std::getline(ss, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '>') {
            any_header = true;
            ProteinEntry e;
            std::string header = line.substr(1);
            auto sp = header.find_first_of(" \t");
            e.accession = header.substr(0, sp);
            if (sp != std::string::npos)
                e.description = header.substr(header.find_first_not_of(" \t", sp));
            out.push_back(std::move(e));
            continue;
        }
        if (!any_header) throw ParseError("sequence before first FASTA header", lineno);
        for (char c : line) {
            if (std::isspace(static_cast<unsigned char>(c))) continue;
            char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            if (!is_residue(u) && u != 'X') {
                u = 'X';
                if (stats) ++stats->mapped_to_x;
            }
            out.back().sequence += u;
        }
    }
    return out;
}

std::vector<ProteinEntry> load_fasta(const std::string& path, ParseStats* stats) {
    return parse_fasta(read_file(path), stats);
}

std::string serialize_fasta(const std::vector<ProteinEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        out += ">" + e.accession;
        if (!e.description.empty()) out += " " + e.description;
        out += "\n" + e.sequence + "\n";
    }
    return out;
}

static const char* kPSMHeader =
    "title\trank\tpeptide\tmodifications\tcharge\tprecursor_mz\tmass_error_ppm\t"
    "kernel_score\tneural_score\tcosine_similarity\tfragment_coverage\tis_decoy\tq_value";

static const char* kDenovoHeader =
    "title\tpeptide\tmodifications\tpredicted_length\tlength_used\tneural_score\t"
    "cosine_similarity\tfragment_coverage\thigh_confidence";

std::string format_psm_report(std::vector<PSMRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const PSMRow& a, const PSMRow& b) {
        if (a.title != b.title) return a.title < b.title;
        return a.rank < b.rank;
    });
    std::string out = kPSMHeader;
    out += '\n';
    for (const auto& r : rows) {
        out += r.title + '\t' + std::to_string(r.rank) + '\t' + r.peptide + '\t' +
               r.modifications + '\t' + std::to_string(r.charge) + '\t' +
               fmt6(r.precursor_mz) + '\t' + fmt6(r.mass_error_ppm) + '\t' +
               fmt6(r.kernel_score) + '\t' + fmt6(r.neural_score) + '\t' +
               fmt6(r.cosine_similarity) + '\t' + fmt6(r.fragment_coverage) + '\t' +
               (r.is_decoy ? "1" : "0") + '\t' + fmt6(r.q_value) + '\n';
    }
    return out;
}

std::string format_denovo_report(std::vector<DenovoRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const DenovoRow& a, const DenovoRow& b) {
        return a.title < b.title;
    });
    std::string out = kDenovoHeader;
    out += '\n';
    for (const auto& r : rows) {
        out += r.title + '\t' + r.peptide + '\t' + r.modifications + '\t' +
               std::to_string(r.predicted_length) + '\t' + std::to_string(r.length_used) +
               '\t' + fmt6(r.neural_score) + '\t' + fmt6(r.cosine_similarity) + '\t' +
               fmt6(r.fragment_coverage) + '\t' + (r.high_confidence ? "1" : "0") + '\n';
    }
    return out;
}

void write_psm_report(const std::vector<PSMRow>& rows, const std::string& path) {
    write_file(path, format_psm_report(rows));
}

void write_denovo_report(const std::vector<DenovoRow>& rows, const std::string& path) {
    write_file(path, format_denovo_report(rows));
}

namespace {
std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}
}  // namespace

std::vector<PSMRow> parse_psm_report(const std::string& text) {
    std::vector<PSMRow> out;
    std::stringstream ss(text);
    std::string line;
    bool first = true;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue;
        }
        auto f = split_tabs(line);
        if (f.size() != 13) throw std::runtime_error("bad PSM report row: " + line);
        PSMRow r;
        r.title = f[0];
        r.rank = std::stoi(f[1]);
        r.peptide = f[2];
        r.modifications = f[3];
        r.charge = std::stoi(f[4]);
        r.precursor_mz = std::stod(f[5]);
        r.mass_error_ppm = std::stod(f[6]);
        r.kernel_score = std::stod(f[7]);
        r.neural_score = std::stod(f[8]);
        r.cosine_similarity = std::stod(f[9]);
        r.fragment_coverage = std::stod(f[10]);
        r.is_decoy = f[11] == "1";
        r.q_value = std::stod(f[12]);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<DenovoRow> parse_denovo_report(const std::string& text) {
    std::vector<DenovoRow> out;
    std::stringstream ss(text);
    std::string line;
    bool first = true;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue;
        }
        auto f = split_tabs(line);
        if (f.size() != 9) throw std::runtime_error("bad de novo report row: " + line);
        DenovoRow r;
        r.title = f[0];
        r.peptide = f[1];
        r.modifications = f[2];
        r.predicted_length = std::stoi(f[3]);
        r.length_used = std::stoi(f[4]);
        r.neural_score = std::stod(f[5]);
        r.cosine_similarity = std::stod(f[6]);
        r.fragment_coverage = std::stod(f[7]);
        r.high_confidence = f[8] == "1";
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace puf
