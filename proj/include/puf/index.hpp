#pragma once

#include <string>
#include <vector>

#include "puf/chem.hpp"
#include "puf/msio.hpp"

namespace puf {

struct IndexEntry {
    double neutral_mass = 0.0;
    Peptide peptide;
    std::vector<std::string> protein_refs;
    bool is_decoy = false;
};

struct CandidatePeptide {
    Peptide peptide;  // open-search hits carry the placed delta-mass mod
    std::vector<std::string> protein_refs;
    bool is_decoy = false;
    double neutral_mass = 0.0;
    double mass_error_ppm = 0.0;  // vs the query mass
};

class PrecursorIndex {
public:
    /// Entries are deduplicated by (sequence, mods); duplicates merge their
    /// protein refs. The index sorts by neutral mass.
    static PrecursorIndex build(std::vector<IndexEntry> entries);

    /// All entries with |mass - query| / query <= tol_ppm * 1e-6.
    std::vector<CandidatePeptide> query_restricted(double precursor_neutral_mass,
                                                   double tol_ppm) const;

    /// Restricted matches plus single-delta open matches: peptides whose mass
    /// deficit matches a table record at a legal site; one candidate per site.
    std::vector<CandidatePeptide> query_open(double precursor_neutral_mass,
                                             double tol_ppm, const ModTable& mods) const;

    const std::vector<IndexEntry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    /// Versioned binary cache, magic "PUFIDX1", little-endian.
    void save(const std::string& path) const;
    static PrecursorIndex load(const std::string& path);

private:
    std::vector<IndexEntry> entries_;  // sorted ascending by neutral_mass
};

/// Build a full target+decoy index from a protein database.
PrecursorIndex build_index_from_fasta(const std::vector<ProteinEntry>& proteins,
                                      const DigestParams& digest_params,
                                      const ModTable& mods, bool fixed_cam = true,
                                      DecoyMode decoy_mode = DecoyMode::TrypticReverse,
                                      const std::vector<std::string>& variable_mods = {},
                                      bool with_decoys = true);

enum class IonLabel : std::uint8_t { None = 0, B, Y, BH2O, YH2O, BNH3, YNH3 };
inline constexpr int kIonLabelCount = 7;

std::string to_string(IonLabel l);
IonLabel ion_label_of(const TheoreticalFragment& f);

struct PeakAnnotation {
    IonLabel label = IonLabel::None;
    int aa_count = 0;  // 0 iff label == None
    double matched_mz_error_ppm = 0.0;
};

/// Match each peak to the nearest theoretical fragment within tol_ppm. Ties
/// break by (smaller ppm error, series b<y, no-loss before loss).
std::vector<PeakAnnotation> annotate_peaks(const ProcessedSpectrum& s, const Peptide& p,
                                           double tol_ppm,
                                           FragmentFlags losses = {true, true},
                                           int max_charge = 2);

/// Fraction of the L-1 backbone cleavage sites witnessed by >=1 matched
/// b or y ion (any loss or charge state).
double fragment_coverage(const ProcessedSpectrum& s, const Peptide& p, double tol_ppm);

}  // namespace puf
