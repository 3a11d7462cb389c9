#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "puf/chem.hpp"

namespace puf {

struct Peak {
    double mz = 0.0;
    double intensity = 0.0;
};

struct Spectrum {
    std::string title;
    double precursor_mz = 0.0;
    int charge = 1;
    std::optional<double> retention_time_sec;
    std::vector<Peak> peaks;  // sorted ascending by mz, duplicates merged
};

enum class IntensityTransform { Sqrt, Linear };

struct ProcessedSpectrum {
    std::string title;
    double precursor_mz = 0.0;
    int charge = 1;
    double precursor_neutral_mass = 0.0;
    std::vector<Peak> peaks;  // at most n_max, intensities normalized to max 1
};

struct ParseStats {
    int skipped_empty_records = 0;
    int mapped_to_x = 0;  // FASTA residues outside the alphabet
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line) : std::runtime_error(msg), line_number(line) {}
    int line_number;
};

std::vector<Spectrum> parse_mgf(const std::string& text, ParseStats* stats = nullptr);
std::vector<Spectrum> load_mgf(const std::string& path, ParseStats* stats = nullptr);
std::string serialize_mgf(const std::vector<Spectrum>& spectra);

ProcessedSpectrum preprocess(const Spectrum& s, int n_max = 256,
                             IntensityTransform transform = IntensityTransform::Sqrt);

std::vector<ProteinEntry> parse_fasta(const std::string& text, ParseStats* stats = nullptr);
std::vector<ProteinEntry> load_fasta(const std::string& path, ParseStats* stats = nullptr);
std::string serialize_fasta(const std::vector<ProteinEntry>& entries);

// Report rows. Floating-point fields are printed with 6 decimals; rows are
// ordered by (spectrum title, rank).
struct PSMRow {
    std::string title;
    int rank = 1;
    std::string peptide;
    std::string modifications;
    int charge = 1;
    double precursor_mz = 0.0;
    double mass_error_ppm = 0.0;
    double kernel_score = 0.0;
    double neural_score = 0.0;
    double cosine_similarity = 0.0;
    double fragment_coverage = 0.0;
    bool is_decoy = false;
    double q_value = 0.0;
};

struct DenovoRow {
    std::string title;
    std::string peptide;
    std::string modifications;
    int predicted_length = 0;
    int length_used = 0;
    double neural_score = 0.0;
    double cosine_similarity = 0.0;
    double fragment_coverage = 0.0;
    bool high_confidence = false;
};

void write_psm_report(const std::vector<PSMRow>& rows, const std::string& path);
void write_denovo_report(const std::vector<DenovoRow>& rows, const std::string& path);
std::string format_psm_report(std::vector<PSMRow> rows);
std::string format_denovo_report(std::vector<DenovoRow> rows);
std::vector<PSMRow> parse_psm_report(const std::string& text);
std::vector<DenovoRow> parse_denovo_report(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace puf
