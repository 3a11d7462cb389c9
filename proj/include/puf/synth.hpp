#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "puf/chem.hpp"
#include "puf/msio.hpp"

namespace puf {

struct SynthConfig {
    int n_proteins = 20;
    int protein_len = 300;
    std::vector<ProteinEntry> source_proteins;  // overrides random generation
    int n_spectra = 500;
    std::vector<std::string> variable_mods;  // candidate names for modified peptides
    double modified_fraction = 0.2;
    std::string single_ptm;  // when set, every modification uses this one PTM
    int noise_peaks = 5;
    double mz_jitter_ppm = 5.0;
    double frag_detect_prob = 1.0;
    // Instrument-shift knobs: relative b-vs-y intensity and neutral-loss level.
    double b_y_balance = 0.7;
    double loss_intensity = 0.15;
    bool pure_noise = false;  // spectra unrelated to the database
    int charge = 2;
    std::uint64_t seed = 42;
    DigestParams digest;
};

struct SynthTruth {
    std::string title;
    Peptide peptide;
    int charge = 2;
};

struct SynthOutput {
    std::vector<ProteinEntry> proteins;
    std::vector<Spectrum> spectra;
    std::vector<SynthTruth> truth;  // empty entries omitted in pure-noise mode
};

/// Deterministic synthetic benchmark: digested peptides rendered through a
/// parametric b/y intensity model with Gaussian m/z jitter and uniform noise
/// peaks. Fixed Carbamidomethyl applied to every C.
SynthOutput make_synthetic(const SynthConfig& cfg, const ModTable& mods);

std::string format_truth_tsv(const std::vector<SynthTruth>& truth);
std::vector<SynthTruth> parse_truth_tsv(const std::string& text, const ModTable& mods);

}  // namespace puf
