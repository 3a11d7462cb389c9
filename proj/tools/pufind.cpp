#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "puf/config.hpp"
#include "puf/denovo.hpp"
#include "puf/evalstats.hpp"
#include "puf/index.hpp"
#include "puf/model.hpp"
#include "puf/msio.hpp"
#include "puf/search.hpp"
#include "puf/synth.hpp"

namespace fs = std::filesystem;
using namespace puf;

namespace {

using Clock = std::chrono::steady_clock;
using Settings = std::vector<std::pair<std::string, std::string>>;

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw ParseError("input file not found: " + path, 0);
}

std::vector<ProcessedSpectrum> load_run(const std::string& mgf_path, int n_max) {
    require_file(mgf_path);
    auto spectra = load_mgf(mgf_path);
    std::vector<ProcessedSpectrum> run;
    run.reserve(spectra.size());
    for (const auto& s : spectra) run.push_back(preprocess(s, n_max));
    return run;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

struct SharedOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed_flag;
    ConfigFile cfg;

    std::uint64_t seed() const { return resolve_seed(seed_flag, cfg); }
    void load() {
        if (!config_path.empty()) {
            require_file(config_path);
            cfg = ConfigFile::load(config_path);
        }
    }
    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "key-value config file");
        app->add_option("--seed", seed_flag, "random seed (overrides config and PUF_SEED)");
    }
};

std::vector<std::vector<PSMRecord>> kernel_pass(const std::vector<ProcessedSpectrum>& run,
                                                const PrecursorIndex& index,
                                                const ModTable& mods,
                                                const SearchConfig& cfg) {
    std::vector<std::vector<PSMRecord>> out;
    out.reserve(run.size());
    for (const auto& s : run) out.push_back(search_spectrum(s, index, mods, cfg));
    return out;
}

// ---- subcommand runners ----

int run_index(const std::string& fasta, const std::string& mods_path,
              const std::string& enzyme, int missed, int min_len, int max_len,
              const std::string& var_mods_csv, const std::string& out_dir,
              SharedOpts& shared) {
    auto t0 = Clock::now();
    require_file(fasta);
    require_file(mods_path);
    ModTable mods = load_modification_table(mods_path);
    DigestParams dp;
    dp.enzyme = enzyme_from_string(enzyme);
    dp.missed_cleavages = missed;
    dp.min_len = min_len;
    dp.max_len = max_len;
    auto proteins = load_fasta(fasta);
    auto index = build_index_from_fasta(proteins, dp, mods, true,
                                        DecoyMode::TrypticReverse, split_csv(var_mods_csv));
    ensure_dir(out_dir);
    index.save((fs::path(out_dir) / "peptides.idx").string());
    double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    write_run_manifest(out_dir, "index",
                       {{"fasta", fasta},
                        {"mods", mods_path},
                        {"enzyme", enzyme},
                        {"entries", std::to_string(index.entries().size())}},
                       shared.seed(), wall);
    std::cout << "indexed " << index.entries().size() << " peptide entries\n";
    return 0;
}

int run_search(const std::string& mgf, const std::string& fasta,
               const std::string& index_path, const std::string& mods_path,
               const std::string& mode, const std::string& enzyme,
               const std::string& model_path, double fdr, double q_gate,
               const std::string& out_dir, SharedOpts& shared) {
    auto t0 = Clock::now();
    require_file(mods_path);
    require_file(model_path);
    ModTable mods = load_modification_table(mods_path);
    ModelParams params = load_params(model_path);
    params.check_vocab_covers(mods);

    EnzymeRule rule = enzyme_from_string(enzyme);
    PrecursorIndex index;
    if (!index_path.empty()) {
        require_file(index_path);
        index = PrecursorIndex::load(index_path);
    } else {
        require_file(fasta);
        DigestParams dp;
        dp.enzyme = rule;
        index = build_index_from_fasta(load_fasta(fasta), dp, mods);
    }

    SearchConfig cfg;
    cfg.mode = mode == "restricted" ? SearchMode::Restricted : SearchMode::Open;
    cfg.top_k = default_top_k(rule);
    cfg.q_gate = q_gate;
    cfg.fdr_target = fdr;

    auto run = load_run(mgf, 256);
    auto per_spectrum = kernel_pass(run, index, mods, cfg);
    RescoreStats st;
    auto final_psms = rescore_run(per_spectrum, run, params, mods, cfg, &st);

    ensure_dir(out_dir);
    std::vector<PSMRow> rows;
    for (const auto& r : final_psms) rows.push_back(to_psm_row(r));
    write_psm_report(rows, (fs::path(out_dir) / "psm_report.tsv").string());

    std::ostringstream summary;
    summary << "spectra = " << run.size() << "\n";
    summary << "spectra_with_candidates = " << st.spectra_with_candidates << "\n";
    summary << "gate_passed = " << st.gate_passed << "\n";
    summary << "accepted_at_fdr = " << st.accepted_at_fdr << "\n";
    summary << "fdr_target = " << fmt(fdr) << "\n";
    write_file((fs::path(out_dir) / "summary.txt").string(), summary.str());

    double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    write_run_manifest(out_dir, "search",
                       {{"mgf", mgf},
                        {"mode", mode},
                        {"enzyme", enzyme},
                        {"top_k", std::to_string(cfg.top_k)},
                        {"q_gate", fmt(q_gate)},
                        {"fdr", fmt(fdr)}},
                       shared.seed(), wall);
    std::cout << "accepted " << st.accepted_at_fdr << " PSMs at " << fdr * 100
              << "% FDR\n";
    return 0;
}

int run_denovo(const std::string& mgf, const std::string& model_path,
               const std::string& mods_path, const std::string& workflow,
               const std::string& user_mods_csv, int beam, double tol_ppm,
               double min_cosine, std::optional<double> min_score_flag,
               const std::string& out_dir, SharedOpts& shared) {
    auto t0 = Clock::now();
    require_file(mods_path);
    require_file(model_path);
    ModTable mods = load_modification_table(mods_path);
    ModelParams params = load_params(model_path);
    params.check_vocab_covers(mods);
    auto run = load_run(mgf, 256);

    std::vector<DenovoRow> records;
    ensure_dir(out_dir);
    if (workflow == "enriched") {
        auto res = enriched_denovo(params, run, mods, split_csv(user_mods_csv), beam,
                                   tol_ppm);
        records = res.records;
        write_file((fs::path(out_dir) / "candidates.fasta").string(), res.compiled_fasta);
        std::ostringstream vm;
        for (const auto& m : res.variable_mods) vm << m << "\n";
        write_file((fs::path(out_dir) / "variable_mods.txt").string(), vm.str());
    } else {
        records = regular_denovo(params, run, mods, beam, tol_ppm).records;
    }
    write_denovo_report(records, (fs::path(out_dir) / "denovo_report.tsv").string());

    FilterConfig fc;
    fc.min_cosine = min_cosine;
    fc.min_neural_score = min_score_flag
                              ? *min_score_flag
                              : null_score_threshold(params, run, records, shared.seed());
    auto qc = qc_filter(records, fc);
    write_denovo_report(qc.kept, (fs::path(out_dir) / "denovo_filtered.tsv").string());
    write_denovo_report(qc.high_confidence,
                        (fs::path(out_dir) / "denovo_high_confidence.tsv").string());

    std::ostringstream summary;
    summary << "spectra = " << run.size() << "\n";
    summary << "records = " << records.size() << "\n";
    summary << "kept = " << qc.kept.size() << "\n";
    summary << "high_confidence = " << qc.high_confidence.size() << "\n";
    summary << "min_neural_score = " << fmt(fc.min_neural_score) << "\n";
    summary << "min_cosine = " << fmt(fc.min_cosine) << "\n";
    write_file((fs::path(out_dir) / "filter_summary.txt").string(), summary.str());

    double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    write_run_manifest(out_dir, "denovo",
                       {{"mgf", mgf}, {"workflow", workflow}, {"beam", std::to_string(beam)}},
                       shared.seed(), wall);
    std::cout << records.size() << " de novo records, " << qc.kept.size()
              << " kept after filtering\n";
    return 0;
}

int run_train(const std::string& mgf, const std::string& truth_path,
              const std::string& fasta, const std::string& mods_path, int epochs,
              int batch_size, int d_model, int n_layers, int n_heads, double lr,
              const std::string& out_dir, SharedOpts& shared) {
    auto t0 = Clock::now();
    require_file(truth_path);
    require_file(mods_path);
    ModTable mods = load_modification_table(mods_path);
    auto run = load_run(mgf, 128);
    auto truth = parse_truth_tsv(read_file(truth_path), mods);
    std::map<std::string, const SynthTruth*> truth_by_title;
    for (const auto& t : truth) truth_by_title[t.title] = &t;

    Hyper hp;
    hp.d_model = d_model;
    hp.n_layers = n_layers;
    hp.n_heads = n_heads;
    hp.learning_rate = lr;
    hp.seed = shared.seed();
    ModelParams params = ModelParams::init(hp, Vocab::from_table(mods));

    // Kernel search supplies the rank-3..10 negatives.
    std::vector<std::vector<PSMRecord>> kernel;
    if (!fasta.empty()) {
        require_file(fasta);
        DigestParams dp;
        PrecursorIndex index = build_index_from_fasta(load_fasta(fasta), dp, mods);
        SearchConfig scfg;
        kernel = kernel_pass(run, index, mods, scfg);
    }

    std::vector<TrainItem> items;
    for (std::size_t i = 0; i < run.size(); ++i) {
        auto it = truth_by_title.find(run[i].title);
        if (it == truth_by_title.end()) continue;
        const Peptide& pos = it->second->peptide;
        if (static_cast<int>(pos.residues.size()) > hp.L_max) continue;
        TrainItem item;
        item.spectrum = run[i];
        item.positive = pos;
        if (!kernel.empty())
            for (const auto& c : kernel[i]) {
                if (c.rank < 3 || c.rank > 10 || c.is_decoy) continue;
                if (c.peptide == pos) continue;
                if (static_cast<int>(c.peptide.residues.size()) > hp.L_max) continue;
                item.negatives.push_back(c.peptide);
            }
        item.annotations = annotate_peaks(run[i], pos, 20.0);
        item.true_length = static_cast<int>(pos.residues.size());
        items.push_back(std::move(item));
    }
    if (items.empty()) throw ParseError("no spectra matched the truth table", 0);

    Trainer trainer(params, LossWeights{});
    std::ostringstream curve;
    curve << "step\ttotal\taa_count\tion_type\tlength\tspectrum_pred\tpointwise\t"
             "listwise\tdecoder\n";
    int step = 0;
    const int batches = std::max<int>(1, static_cast<int>(items.size()) / batch_size);
    for (int e = 0; e < epochs; ++e) {
        for (int b = 0; b < batches; ++b) {
            auto first = items.begin() + static_cast<std::ptrdiff_t>(b) * batch_size;
            auto last = b == batches - 1
                            ? items.end()
                            : first + batch_size;
            LossComponents lc = trainer.step(std::vector<TrainItem>(first, last));
            curve << ++step << '\t' << fmt(lc.total) << '\t' << fmt(lc.aa_count) << '\t'
                  << fmt(lc.ion_type) << '\t' << fmt(lc.length) << '\t'
                  << fmt(lc.spectrum_pred) << '\t' << fmt(lc.pointwise) << '\t'
                  << fmt(lc.listwise) << '\t' << fmt(lc.decoder) << '\n';
        }
    }
    ensure_dir(out_dir);
    save_params(params, (fs::path(out_dir) / "model.pufmdl").string());
    write_file((fs::path(out_dir) / "loss_curve.tsv").string(), curve.str());
    double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    write_run_manifest(out_dir, "train",
                       {{"mgf", mgf},
                        {"items", std::to_string(items.size())},
                        {"epochs", std::to_string(epochs)},
                        {"batch_size", std::to_string(batch_size)},
                        {"d_model", std::to_string(d_model)}},
                       shared.seed(), wall);
    std::cout << "trained " << step << " steps over " << items.size() << " PSMs\n";
    return 0;
}

int run_finetune(const std::string& mgf, const std::string& fasta,
                 const std::string& mods_path, const std::string& model_path,
                 const std::string& mode, const std::string& out_dir,
                 SharedOpts& shared) {
    auto t0 = Clock::now();
    require_file(mods_path);
    require_file(model_path);
    require_file(fasta);
    ModTable mods = load_modification_table(mods_path);
    ModelParams params = load_params(model_path);
    params.check_vocab_covers(mods);
    auto run = load_run(mgf, 128);
    DigestParams dp;
    PrecursorIndex index = build_index_from_fasta(load_fasta(fasta), dp, mods);
    SearchConfig cfg;
    cfg.mode = mode == "restricted" ? SearchMode::Restricted : SearchMode::Open;
    auto kernel = kernel_pass(run, index, mods, cfg);
    FinetuneResult res = finetune(params, kernel, run, mods, cfg);
    ensure_dir(out_dir);
    save_params(params, (fs::path(out_dir) / "model.pufmdl").string());
    std::ostringstream summary;
    summary << "batches = " << res.batches << "\n";
    summary << "train_spectra = " << res.train_spectra << "\n";
    summary << "heldout_spectra = " << res.heldout_spectra << "\n";
    summary << "accepted_before = " << res.accepted_before << "\n";
    summary << "accepted_after = " << res.accepted_after << "\n";
    write_file((fs::path(out_dir) / "finetune_summary.txt").string(), summary.str());
    double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    write_run_manifest(out_dir, "finetune", {{"mgf", mgf}, {"mode", mode}},
                       shared.seed(), wall);
    std::cout << "accepted before/after: " << res.accepted_before << "/"
              << res.accepted_after << "\n";
    return 0;
}

int run_eval(const std::string& pred_path, const std::string& truth_path,
             const std::string& mods_path, bool il_equiv, const std::string& out_dir,
             SharedOpts& shared) {
    auto t0 = Clock::now();
    require_file(pred_path);
    require_file(truth_path);
    require_file(mods_path);
    ModTable mods = load_modification_table(mods_path);
    auto truth = parse_truth_tsv(read_file(truth_path), mods);

    std::string pred_text = read_file(pred_path);
    std::map<std::string, std::pair<std::string, std::string>> pred;  // title -> (seq, mods)
    if (pred_text.rfind("title\trank\t", 0) == 0) {
        for (const auto& r : parse_psm_report(pred_text))
            if (r.rank == 1 && !r.is_decoy) pred[r.title] = {r.peptide, r.modifications};
    } else {
        for (const auto& r : parse_denovo_report(pred_text))
            pred[r.title] = {r.peptide, r.modifications};
    }

    std::vector<EvalPair> pairs;
    for (const auto& t : truth) {
        EvalPair pr;
        pr.title = t.title;
        pr.truth = t.peptide;
        auto it = pred.find(t.title);
        if (it != pred.end()) {
            Peptide p;
            p.residues = it->second.first;
            p.mods = parse_mods(it->second.second, mods, p.residues);
            pr.predicted = std::move(p);
        }
        pairs.push_back(std::move(pr));
    }
    std::set<std::string> truth_titles;
    for (const auto& t : truth) truth_titles.insert(t.title);
    int excluded = 0;
    for (const auto& [title, _] : pred)
        if (!truth_titles.count(title)) ++excluded;

    double recall = peptide_recall(pairs, il_equiv);
    auto mod_acc = modification_accuracy(pairs);
    auto site_acc = site_accuracy(pairs);

    std::ostringstream out;
    out << "metric\tvalue\n";
    out << "evaluated_pairs\t" << pairs.size() << "\n";
    out << "predictions_without_truth\t" << excluded << "\n";
    out << "peptide_recall\t" << fmt(recall) << "\n";
    out << "modification_accuracy\t" << (mod_acc ? fmt(*mod_acc) : "absent") << "\n";
    out << "site_accuracy\t" << (site_acc ? fmt(*site_acc) : "absent") << "\n";
    ensure_dir(out_dir);
    write_file((fs::path(out_dir) / "metrics.tsv").string(), out.str());

    std::vector<std::string> labels{"recall"};
    std::vector<double> values{recall};
    if (mod_acc) {
        labels.push_back("mod_acc");
        values.push_back(*mod_acc);
    }
    if (site_acc) {
        labels.push_back("site_acc");
        values.push_back(*site_acc);
    }
    write_file((fs::path(out_dir) / "metrics.svg").string(),
               svg_barchart(labels, values, "evaluation metrics"));
    double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    write_run_manifest(out_dir, "eval",
                       {{"pred", pred_path},
                        {"truth", truth_path},
                        {"il_equiv", il_equiv ? "true" : "false"}},
                       shared.seed(), wall);
    std::cout << "peptide recall " << fmt(recall) << "\n";
    return 0;
}

int run_entrap(const std::string& ids_path, double ratio, double fdr,
               const std::string& entrap_tag, const std::string& out_dir,
               SharedOpts& shared) {
    auto t0 = Clock::now();
    require_file(ids_path);
    std::istringstream in(read_file(ids_path));
    std::string line;
    std::vector<std::string> tags;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("peptide\t", 0) == 0) continue;
        }
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("ids TSV: expected peptide<TAB>species", 0);
        tags.push_back(line.substr(tab + 1));
    }
    auto res = entrapment_analysis(tags, entrap_tag, ratio, fdr);
    std::ostringstream out;
    out << "metric\tvalue\n";
    out << "total_ids\t" << res.total << "\n";
    out << "entrapment_ids\t" << res.entrapment_count << "\n";
    out << "observed_ratio\t"
        << (res.observed_ratio ? fmt(*res.observed_ratio) : "absent") << "\n";
    out << "expected_ratio\t" << fmt(res.expected_ratio) << "\n";
    out << "# expected_ratio = fdr/(1+r) treats the whole accepted set as the\n";
    out << "# denominator; if only false matches spill into the entrapment\n";
    out << "# database, the same arithmetic bounds the entrapment share of the\n";
    out << "# false subset at 1/(1+r) = " << fmt(1.0 / (1.0 + ratio)) << "\n";
    ensure_dir(out_dir);
    write_file((fs::path(out_dir) / "entrapment.tsv").string(), out.str());
    double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    write_run_manifest(out_dir, "entrap",
                       {{"ids", ids_path}, {"ratio", fmt(ratio)}, {"fdr", fmt(fdr)}},
                       shared.seed(), wall);
    if (res.observed_ratio)
        std::cout << "observed " << fmt(*res.observed_ratio) << ", expected "
                  << fmt(res.expected_ratio) << "\n";
    return 0;
}

int run_synth(const SynthConfig& base, const std::string& mods_path,
              const std::string& source_fasta, const std::string& out_dir,
              SharedOpts& shared) {
    auto t0 = Clock::now();
    require_file(mods_path);
    ModTable mods = load_modification_table(mods_path);
    SynthConfig cfg = base;
    cfg.seed = shared.seed();
    if (!source_fasta.empty()) {
        require_file(source_fasta);
        cfg.source_proteins = load_fasta(source_fasta);
    }
    SynthOutput out = make_synthetic(cfg, mods);
    ensure_dir(out_dir);
    write_file((fs::path(out_dir) / "spectra.mgf").string(), serialize_mgf(out.spectra));
    write_file((fs::path(out_dir) / "truth.tsv").string(), format_truth_tsv(out.truth));
    write_file((fs::path(out_dir) / "proteins.fasta").string(),
               serialize_fasta(out.proteins));
    double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    write_run_manifest(out_dir, "synth",
                       {{"n_spectra", std::to_string(cfg.n_spectra)},
                        {"modified_fraction", fmt(cfg.modified_fraction)},
                        {"single_ptm", cfg.single_ptm},
                        {"pure_noise", cfg.pure_noise ? "true" : "false"}},
                       shared.seed(), wall);
    std::cout << "wrote " << out.spectra.size() << " spectra\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"peptide-spectrum interpretation toolkit"};
    app.require_subcommand(1);
    SharedOpts shared;

    // index
    auto* c_index = app.add_subcommand("index", "build a peptide precursor index");
    std::string i_fasta, i_mods, i_enzyme = "trypsin", i_varmods, i_out = "out";
    int i_missed = 2, i_min = 6, i_max = 45;
    c_index->add_option("--fasta", i_fasta)->required();
    c_index->add_option("--mods", i_mods)->required();
    c_index->add_option("--enzyme", i_enzyme);
    c_index->add_option("--missed", i_missed);
    c_index->add_option("--min-len", i_min);
    c_index->add_option("--max-len", i_max);
    c_index->add_option("--var-mods", i_varmods, "comma-separated variable mod names");
    c_index->add_option("--out", i_out)->required();
    shared.attach(c_index);

    // search
    auto* c_search = app.add_subcommand("search", "database search with neural rescoring");
    std::string s_mgf, s_fasta, s_index, s_mods, s_mode = "open", s_enzyme = "trypsin";
    std::string s_model, s_out = "out";
    double s_fdr = 0.01, s_qgate = 0.1;
    c_search->add_option("--mgf", s_mgf)->required();
    c_search->add_option("--fasta", s_fasta);
    c_search->add_option("--index", s_index);
    c_search->add_option("--mods", s_mods)->required();
    c_search->add_option("--mode", s_mode)->check(CLI::IsMember({"open", "restricted"}));
    c_search->add_option("--enzyme", s_enzyme);
    c_search->add_option("--model", s_model)->required();
    c_search->add_option("--fdr", s_fdr);
    c_search->add_option("--q-gate", s_qgate);
    c_search->add_option("--out", s_out)->required();
    shared.attach(c_search);

    // denovo
    auto* c_denovo = app.add_subcommand("denovo", "open de novo sequencing");
    std::string d_mgf, d_model, d_mods, d_workflow = "regular", d_usermods, d_out = "out";
    int d_beam = 8;
    double d_tol = 20.0, d_mincos = 0.7;
    std::optional<double> d_minscore;
    c_denovo->add_option("--mgf", d_mgf)->required();
    c_denovo->add_option("--model", d_model)->required();
    c_denovo->add_option("--mods", d_mods)->required();
    c_denovo->add_option("--workflow", d_workflow)
        ->check(CLI::IsMember({"regular", "enriched"}));
    c_denovo->add_option("--user-mods", d_usermods);
    c_denovo->add_option("--beam", d_beam);
    c_denovo->add_option("--tol-ppm", d_tol);
    c_denovo->add_option("--min-cosine", d_mincos);
    c_denovo->add_option("--min-score", d_minscore,
                         "neural-score floor (default: 5th percentile of shuffled null)");
    c_denovo->add_option("--out", d_out)->required();
    shared.attach(c_denovo);

    // train
    auto* c_train = app.add_subcommand("train", "train a model on an annotated run");
    std::string t_mgf, t_truth, t_fasta, t_mods, t_out = "out";
    int t_epochs = 1, t_batch = 8, t_dmodel = 64, t_layers = 2, t_heads = 4;
    double t_lr = 1e-3;
    c_train->add_option("--mgf", t_mgf)->required();
    c_train->add_option("--truth", t_truth)->required();
    c_train->add_option("--fasta", t_fasta, "database for negative mining");
    c_train->add_option("--mods", t_mods)->required();
    c_train->add_option("--epochs", t_epochs);
    c_train->add_option("--batch-size", t_batch);
    c_train->add_option("--d-model", t_dmodel);
    c_train->add_option("--layers", t_layers);
    c_train->add_option("--heads", t_heads);
    c_train->add_option("--lr", t_lr);
    c_train->add_option("--out", t_out)->required();
    shared.attach(c_train);

    // finetune
    auto* c_ft = app.add_subcommand("finetune", "one-epoch adaptation on a new run");
    std::string f_mgf, f_fasta, f_mods, f_model, f_mode = "open", f_out = "out";
    c_ft->add_option("--mgf", f_mgf)->required();
    c_ft->add_option("--fasta", f_fasta)->required();
    c_ft->add_option("--mods", f_mods)->required();
    c_ft->add_option("--model", f_model)->required();
    c_ft->add_option("--mode", f_mode)->check(CLI::IsMember({"open", "restricted"}));
    c_ft->add_option("--out", f_out)->required();
    shared.attach(c_ft);

    // eval
    auto* c_eval = app.add_subcommand("eval", "score predictions against truth");
    std::string e_pred, e_truth, e_mods, e_out = "out";
    bool e_il = false;
    c_eval->add_option("--pred", e_pred)->required();
    c_eval->add_option("--truth", e_truth)->required();
    c_eval->add_option("--mods", e_mods)->required();
    c_eval->add_flag("--il-equiv", e_il);
    c_eval->add_option("--out", e_out)->required();
    shared.attach(c_eval);

    // entrap
    auto* c_entrap = app.add_subcommand("entrap", "entrapment-database analysis");
    std::string n_ids, n_tag = "entrapment", n_out = "out";
    double n_ratio = 1.75, n_fdr = 0.01;
    c_entrap->add_option("--ids", n_ids)->required();
    c_entrap->add_option("--ratio", n_ratio);
    c_entrap->add_option("--fdr", n_fdr);
    c_entrap->add_option("--entrap-tag", n_tag);
    c_entrap->add_option("--out", n_out)->required();
    shared.attach(c_entrap);

    // synth
    auto* c_synth = app.add_subcommand("synth", "generate a synthetic benchmark");
    SynthConfig sy;
    std::string y_mods, y_fasta, y_out = "out";
    c_synth->add_option("--mods", y_mods)->required();
    c_synth->add_option("--fasta", y_fasta, "source proteins (default: random)");
    c_synth->add_option("--proteins", sy.n_proteins);
    c_synth->add_option("--spectra", sy.n_spectra);
    c_synth->add_option("--var-mods", [&sy](const std::vector<std::string>& v) {
        sy.variable_mods = split_csv(v.back());
        return true;
    }, "comma-separated modification names");
    c_synth->add_option("--modified-fraction", sy.modified_fraction);
    c_synth->add_option("--single-ptm", sy.single_ptm);
    c_synth->add_option("--noise-peaks", sy.noise_peaks);
    c_synth->add_option("--jitter-ppm", sy.mz_jitter_ppm);
    c_synth->add_option("--detect-prob", sy.frag_detect_prob);
    c_synth->add_option("--b-y-balance", sy.b_y_balance);
    c_synth->add_option("--loss-intensity", sy.loss_intensity);
    c_synth->add_flag("--pure-noise", sy.pure_noise);
    c_synth->add_option("--out", y_out)->required();
    shared.attach(c_synth);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        shared.load();
        if (*c_index)
            return run_index(i_fasta, i_mods, i_enzyme, i_missed, i_min, i_max, i_varmods,
                             i_out, shared);
        if (*c_search)
            return run_search(s_mgf, s_fasta, s_index, s_mods, s_mode, s_enzyme, s_model,
                              s_fdr, s_qgate, s_out, shared);
        if (*c_denovo)
            return run_denovo(d_mgf, d_model, d_mods, d_workflow, d_usermods, d_beam,
                              d_tol, d_mincos, d_minscore, d_out, shared);
        if (*c_train)
            return run_train(t_mgf, t_truth, t_fasta, t_mods, t_epochs, t_batch, t_dmodel,
                             t_layers, t_heads, t_lr, t_out, shared);
        if (*c_ft)
            return run_finetune(f_mgf, f_fasta, f_mods, f_model, f_mode, f_out, shared);
        if (*c_eval) return run_eval(e_pred, e_truth, e_mods, e_il, e_out, shared);
        if (*c_entrap) return run_entrap(n_ids, n_ratio, n_fdr, n_tag, n_out, shared);
        if (*c_synth) return run_synth(sy, y_mods, y_fasta, y_out, shared);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
