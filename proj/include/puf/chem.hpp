#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace puf {

// Monoisotopic constants, Da.
inline constexpr double kProtonMass = 1.007276466;
inline constexpr double kWaterMass = 18.010565;
inline constexpr double kAmmoniaMass = 17.026549;

// Canonical residue order used for token ids and mass lookups.
inline constexpr std::string_view kResidueAlphabet = "ACDEFGHIKLMNPQRSTVWY";

/// Monoisotopic residue mass. Unknown residue X carries mass 0; any other
/// letter outside the alphabet throws.
double residue_mass(char aa);

bool is_residue(char aa);

/// Position component of a modification site rule.
enum class ModPosition : std::uint8_t {
    Anywhere,
    AnyNTerm,
    ProteinNTerm,
    AnyCTerm,
};

std::string to_string(ModPosition p);
ModPosition mod_position_from_string(const std::string& s);

struct ModificationRecord {
    std::string name;
    char site = '*';  // residue letter, or '*' for any residue
    ModPosition position = ModPosition::Anywhere;
    double delta_mass = 0.0;
    int token_id = -1;  // shared across records with the same name
};

/// Terminus markers for Peptide mod positions.
inline constexpr int kModPosNTerm = -1;
inline constexpr int kModPosCTerm = -2;

struct PlacedMod {
    int pos = 0;  // 0-based residue index, or kModPosNTerm / kModPosCTerm
    ModificationRecord record;
};

struct Peptide {
    std::string residues;
    std::vector<PlacedMod> mods;

    bool operator==(const Peptide& o) const;
};

/// Neutral (uncharged) monoisotopic mass: residues + mod deltas + water.
double peptide_neutral_mass(const Peptide& p);

/// Does `record` allow placement at `pos` (0-based index or terminus marker)
/// within `residues`?
bool site_allowed(const ModificationRecord& record, const std::string& residues,
                  int pos, bool protein_nterm = false);

/// "Name@3;Name2@N-term" (positions 1-based). Empty string for no mods.
std::string format_mods(const Peptide& p);

/// Parse the format produced by format_mods, resolving names via the table.
struct ModTable;
std::vector<PlacedMod> parse_mods(const std::string& text, const ModTable& table,
                                  const std::string& residues);

struct ModTable {
    std::vector<ModificationRecord> records;          // load order
    std::vector<std::size_t> by_mass;                 // indices sorted by delta_mass
    int token_count = 0;                              // distinct names

    const ModificationRecord* find_by_name(const std::string& name) const;
    /// All records whose delta_mass is within tol_da of delta.
    std::vector<const ModificationRecord*> find_by_delta(double delta, double tol_da) const;
    int token_for_name(const std::string& name) const;  // -1 if absent
};

/// Load the modification TSV (columns: name, site, position, delta_mass).
/// Lines starting with '#' and a literal header row are skipped.
ModTable load_modification_table(const std::string& path);
ModTable parse_modification_table(const std::string& text);

struct ProteinEntry {
    std::string accession;
    std::string description;
    std::string sequence;
};

enum class EnzymeRule {
    Trypsin,      // cleave after K/R, not before P
    NonSpecific,  // every substring in the length range
    WholeEntry,   // the entry itself is the peptide
};

EnzymeRule enzyme_from_string(const std::string& s);

struct DigestParams {
    EnzymeRule enzyme = EnzymeRule::Trypsin;
    int missed_cleavages = 2;
    int min_len = 6;
    int max_len = 45;
};

/// Enumerate peptides of `entry` under the rule, deduplicated per protein.
/// Peptides containing X are excluded. Output carries no modifications.
std::vector<Peptide> digest(const ProteinEntry& entry, const DigestParams& params);

enum class DecoyMode { FullReverse, TrypticReverse };

/// Reversed-sequence decoy; accession prefixed "DECOY_". TrypticReverse
/// reverses each inter-cleavage segment keeping the C-terminal K/R fixed.
ProteinEntry generate_decoy(const ProteinEntry& entry, DecoyMode mode);

enum class IonSeries : std::uint8_t { B, Y };
enum class NeutralLoss : std::uint8_t { None, H2O, NH3 };

struct TheoreticalFragment {
    IonSeries series;
    int index = 0;  // 1..L-1
    NeutralLoss loss = NeutralLoss::None;
    int charge = 1;
    double mz = 0.0;
    int aa_count = 0;  // equals index for both series
};

struct FragmentFlags {
    bool h2o_loss = false;
    bool nh3_loss = false;
};

/// b/y fragments for charges 1..max_charge, in deterministic order
/// (series, index, loss, charge). NH3 loss only for fragments containing
/// K/R/N/Q; H2O loss only for fragments containing S/T/E/D.
std::vector<TheoreticalFragment> generate_fragments(const Peptide& p, int max_charge,
                                                    FragmentFlags losses = {});

/// Apply Carbamidomethyl to every C residue (fixed modification convention).
void apply_fixed_carbamidomethyl(Peptide& p, const ModTable& table);

class ChemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace puf
