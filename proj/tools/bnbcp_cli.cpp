// Command-line driver: fit / eval / synth / topics.

#include "bnbcp/evaluation.hpp"
#include "bnbcp/gibbs.hpp"
#include "bnbcp/io.hpp"
#include "bnbcp/model.hpp"
#include "bnbcp/online.hpp"
#include "bnbcp/sparse_tensor.hpp"
#include "bnbcp/synthetic.hpp"
#include "bnbcp/vb.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace bnbcp;

namespace {

struct FitArgs {
    std::string input;
    std::string outdir;
    std::string method;
    int rank = 0;
    std::int64_t burnin = 100;
    std::int64_t samples = 100;
    std::int64_t iters = 100;
    std::int64_t minibatch = 1000;
    double t0 = 0.0;
    double kappa = 0.5;
    double heldout_frac = 0.05;
    std::uint64_t seed = 0;
    int workers = 1;
    std::vector<double> a{0.1};
    double g = 1.0;
    double c = 1.0;
    double epsilon = -1.0; // default 1/R
    std::int64_t eval_every = 10;
    double rank_threshold = 0.01;
    std::string export_sample = "mean";
    bool sum_duplicates = false;
    bool epoch_shuffle = false;
};

Hyperparams<double> make_hyper(const TensorShape& shape, int rank,
                               const std::vector<double>& a, double g,
                               double c, double epsilon) {
    Hyperparams<double> hyper =
        Hyperparams<double>::defaults(shape.num_modes(), rank);
    if (a.size() == 1) {
        hyper.dirichlet_a.assign(
            static_cast<std::size_t>(shape.num_modes()), a[0]);
    } else if (static_cast<int>(a.size()) == shape.num_modes()) {
        hyper.dirichlet_a = a;
    } else {
        throw std::invalid_argument(
            "--a expects one value or one value per mode");
    }
    hyper.gamma_shape = g;
    hyper.beta_concentration = c;
    if (epsilon > 0.0) {
        hyper.beta_mean = epsilon;
    }
    hyper.validate(shape.num_modes());
    return hyper;
}

json shape_to_json(const TensorShape& shape) {
    json dims = json::array();
    for (index_t d : shape.dims) dims.push_back(d);
    return dims;
}

void write_manifest(const fs::path& dir, const json& manifest) {
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        throw FormatError("cannot write manifest in " + dir.string());
    }
    out << manifest.dump(2) << '\n';
}

int detect_num_modes(const fs::path& model_dir) {
    const fs::path manifest_path = model_dir / "manifest.json";
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        json manifest = json::parse(in);
        if (manifest.contains("dims")) {
            return static_cast<int>(manifest["dims"].size());
        }
    }
    int k = 0;
    while (fs::exists(model_dir / ("mode_" + std::to_string(k) + ".csv"))) {
        ++k;
    }
    if (k == 0) {
        throw FormatError("no mode_*.csv factor files in " +
                          model_dir.string());
    }
    return k;
}

int cmd_fit(const FitArgs& args) {
    const DuplicatePolicy policy = args.sum_duplicates
                                       ? DuplicatePolicy::Sum
                                       : DuplicatePolicy::Error;
    const SparseCountTensor full = load_tensor(args.input, policy);

    SparseCountTensor train = full;
    SparseCountTensor heldout(full.shape());
    if (args.heldout_frac > 0.0) {
        std::tie(train, heldout) =
            split_heldout(full, args.heldout_frac, args.seed);
    }

    const Hyperparams<double> hyper = make_hyper(
        full.shape(), args.rank, args.a, args.g, args.c, args.epsilon);

    const fs::path outdir(args.outdir);
    fs::create_directories(outdir);

    ModelState<double> exported;
    FitTrace trace;
    if (args.method == "gibbs") {
        GibbsConfig config;
        config.burnin = args.burnin;
        config.collection = args.samples;
        config.seed = args.seed;
        config.eval_every = args.eval_every;
        config.workers = args.workers;
        config.rank_threshold = args.rank_threshold;
        auto [summary, t] = run_gibbs(train, heldout, config, hyper);
        trace = std::move(t);
        exported = args.export_sample == "last" ? summary.last_sample
                                                : summary.mean_model;
    } else if (args.method == "vb") {
        VbConfig config;
        config.max_iters = args.iters;
        config.eval_every = args.eval_every;
        config.seed = args.seed;
        config.workers = args.workers;
        config.rank_threshold = args.rank_threshold;
        auto [vstate, t] = run_vb(train, heldout, config, hyper);
        trace = std::move(t);
        exported = point_estimate(vstate);
    } else { // cdf | svi
        MinibatchPlan plan;
        plan.batch_size = args.minibatch;
        plan.sampling = args.epoch_shuffle
                            ? MinibatchSampling::EpochShuffled
                            : MinibatchSampling::UniformWithReplacement;
        plan.seed = derive_seed(args.seed, 0xb47c);
        LearningRateSchedule sched{args.t0, args.kappa};
        OnlineConfig config;
        config.iters = args.iters;
        config.eval_every = args.eval_every;
        config.seed = args.seed;
        config.workers = args.workers;
        config.rank_threshold = args.rank_threshold;
        const OnlineEngine engine = args.method == "cdf" ? OnlineEngine::Cdf
                                                         : OnlineEngine::Svi;
        auto [fit, t] = run_online(engine, train, heldout, plan, sched,
                                   config, hyper);
        trace = std::move(t);
        exported = std::move(fit.model);
    }

    save_model(outdir, exported);
    trace.write_csv(outdir / "trace.csv");
    if (heldout.nnz() > 0) {
        save_tensor(heldout, outdir / "heldout.tns");
    }

    json manifest;
    manifest["tool"] = "bnbcp";
    manifest["version"] = kVersion;
    manifest["format_version"] = 1;
    manifest["command"] = "fit";
    manifest["dims"] = shape_to_json(full.shape());
    manifest["method"] = args.method;
    manifest["rank"] = args.rank;
    manifest["seed"] = args.seed;
    json flags;
    flags["input"] = args.input;
    flags["outdir"] = args.outdir;
    flags["method"] = args.method;
    flags["rank"] = args.rank;
    flags["burnin"] = args.burnin;
    flags["samples"] = args.samples;
    flags["iters"] = args.iters;
    flags["minibatch"] = args.minibatch;
    flags["t0"] = args.t0;
    flags["kappa"] = args.kappa;
    flags["heldout-frac"] = args.heldout_frac;
    flags["seed"] = args.seed;
    flags["workers"] = args.workers;
    flags["a"] = args.a;
    flags["g"] = args.g;
    flags["c"] = args.c;
    flags["epsilon"] =
        args.epsilon > 0.0 ? args.epsilon : 1.0 / args.rank;
    flags["eval-every"] = args.eval_every;
    flags["rank-threshold"] = args.rank_threshold;
    flags["export-sample"] = args.export_sample;
    flags["sum-duplicates"] = args.sum_duplicates;
    flags["epoch-shuffle"] = args.epoch_shuffle;
    manifest["flags"] = std::move(flags);
    json metrics;
    metrics["loglik"] = heldout_loglik(heldout, exported);
    metrics["mae"] = heldout_mae(heldout, exported);
    metrics["effective_rank"] =
        effective_rank(exported.lambda, args.rank_threshold);
    manifest["final_metrics"] = std::move(metrics);
    write_manifest(outdir, manifest);
    return 0;
}

int cmd_eval(const std::string& model_dir, const std::string& input,
             double rank_threshold) {
    const int num_modes = detect_num_modes(model_dir);
    const ModelState<double> model = load_model(model_dir, num_modes);
    const SparseCountTensor tensor = load_tensor(input);

    if (tensor.shape().num_modes() != model.num_modes()) {
        throw ValidationError("model has " +
                              std::to_string(model.num_modes()) +
                              " modes but tensor has " +
                              std::to_string(tensor.shape().num_modes()));
    }
    for (int k = 0; k < model.num_modes(); ++k) {
        const auto rows = model.factors[static_cast<std::size_t>(k)].rows();
        if (rows != tensor.shape().dims[static_cast<std::size_t>(k)]) {
            throw ValidationError(
                "mode " + std::to_string(k) + " size mismatch: model has " +
                std::to_string(rows) + ", tensor has " +
                std::to_string(
                    tensor.shape().dims[static_cast<std::size_t>(k)]));
        }
    }

    json out;
    out["loglik"] = heldout_loglik(tensor, model);
    out["mae"] = heldout_mae(tensor, model);
    out["effective_rank"] = effective_rank(model.lambda, rank_threshold);
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_synth(const std::vector<index_t>& dims, int rank, int significant,
              double lambda_scale, const std::vector<double>& a, double g,
              double c, double epsilon, std::uint64_t seed,
              const std::string& outdir) {
    TensorShape shape{dims};
    shape.validate();
    if (shape.volume() > 1'000'000'000) {
        throw SizeError("refusing to enumerate " +
                        std::to_string(shape.volume()) + " cells");
    }
    const Hyperparams<double> hyper =
        make_hyper(shape, rank, a, g, c, epsilon);
    GenerateOptions opts;
    opts.blockwise = true;
    const SyntheticData<double> data =
        generate(shape, rank, significant, lambda_scale, hyper, seed, opts);

    const fs::path dir(outdir);
    fs::create_directories(dir);
    save_tensor(data.tensor, dir / "tensor.tns");

    std::ofstream truth(dir / "truth.csv");
    truth << std::setprecision(17) << "r,lambda,significant\n";
    for (int r = 0; r < data.ground_truth.rank(); ++r) {
        truth << r << ',' << data.ground_truth.lambda[r] << ','
              << (r < significant ? 1 : 0) << '\n';
    }

    json manifest;
    manifest["tool"] = "bnbcp";
    manifest["version"] = kVersion;
    manifest["command"] = "synth";
    manifest["dims"] = shape_to_json(shape);
    manifest["rank"] = rank;
    manifest["significant"] = significant;
    manifest["lambda_scale"] = lambda_scale;
    manifest["seed"] = seed;
    manifest["nnz"] = data.tensor.nnz();
    write_manifest(dir, manifest);
    return 0;
}

int cmd_topics(const std::string& model_dir, int mode, int top,
               const std::string& vocab_path) {
    const fs::path factor_file =
        fs::path(model_dir) / ("mode_" + std::to_string(mode) + ".csv");
    const matrixd factors = read_factor_csv(factor_file);

    std::vector<std::string> labels;
    if (!vocab_path.empty()) {
        std::ifstream in(vocab_path);
        if (!in) {
            throw FormatError("cannot open vocabulary file: " + vocab_path);
        }
        std::string line;
        while (std::getline(in, line)) labels.push_back(line);
        if (static_cast<Eigen::Index>(labels.size()) < factors.rows()) {
            throw ValidationError(
                "vocabulary has " + std::to_string(labels.size()) +
                " labels but mode " + std::to_string(mode) + " has " +
                std::to_string(factors.rows()) + " entities (" +
                std::to_string(factors.rows() -
                               static_cast<Eigen::Index>(labels.size())) +
                " missing)");
        }
    }

    const int m = std::min<int>(top, static_cast<int>(factors.rows()));
    std::cout << "factor\trank\tindex\tweight\tlabel\n";
    std::cout << std::setprecision(17);
    std::vector<Eigen::Index> order(
        static_cast<std::size_t>(factors.rows()));
    for (int r = 0; r < factors.cols(); ++r) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index i, Eigen::Index j) {
                             return factors(i, r) > factors(j, r);
                         });
        for (int rank_pos = 0; rank_pos < m; ++rank_pos) {
            const Eigen::Index idx = order[static_cast<std::size_t>(rank_pos)];
            std::cout << r << '\t' << rank_pos << '\t' << idx << '\t'
                      << factors(idx, r) << '\t'
                      << (labels.empty()
                              ? std::string()
                              : labels[static_cast<std::size_t>(idx)])
                      << '\n';
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Beta-negative-binomial CP factorization of sparse count "
                 "tensors"};
    app.require_subcommand(1);

    FitArgs fit_args;
    CLI::App* fit = app.add_subcommand("fit", "fit a model to a tensor file");
    fit->add_option("--input", fit_args.input, "tensor file")->required();
    fit->add_option("--outdir", fit_args.outdir, "output directory")
        ->required();
    fit->add_option("--method", fit_args.method, "inference engine")
        ->required()
        ->check(CLI::IsMember({"gibbs", "vb", "cdf", "svi"}));
    fit->add_option("--rank", fit_args.rank, "rank upper bound R")
        ->required()
        ->check(CLI::PositiveNumber);
    fit->add_option("--burnin", fit_args.burnin, "burn-in sweeps (gibbs)");
    fit->add_option("--samples", fit_args.samples,
                    "collection sweeps (gibbs)");
    fit->add_option("--iters", fit_args.iters,
                    "iterations (vb) or minibatch steps (cdf/svi)");
    fit->add_option("--minibatch", fit_args.minibatch,
                    "minibatch size (cdf/svi)");
    fit->add_option("--t0", fit_args.t0, "learning-rate offset");
    fit->add_option("--kappa", fit_args.kappa, "learning-rate exponent");
    fit->add_option("--heldout-frac", fit_args.heldout_frac,
                    "heldout fraction of stored entries; 0 disables");
    fit->add_option("--seed", fit_args.seed, "random seed");
    fit->add_option("--workers", fit_args.workers,
                    "allocation-phase threads");
    fit->add_option("--a", fit_args.a,
                    "Dirichlet concentration (one value or one per mode)")
        ->delimiter(',');
    fit->add_option("--g", fit_args.g, "gamma shape g");
    fit->add_option("--c", fit_args.c, "beta concentration c");
    fit->add_option("--epsilon", fit_args.epsilon,
                    "beta mean (default 1/R)");
    fit->add_option("--eval-every", fit_args.eval_every,
                    "trace interval in iterations");
    fit->add_option("--rank-threshold", fit_args.rank_threshold,
                    "relative lambda threshold for the effective rank");
    fit->add_option("--export-sample", fit_args.export_sample,
                    "which gibbs estimate to export")
        ->check(CLI::IsMember({"mean", "last"}));
    fit->add_flag("--sum-duplicates", fit_args.sum_duplicates,
                  "sum duplicate coordinates instead of rejecting them");
    fit->add_flag("--epoch-shuffle", fit_args.epoch_shuffle,
                  "epoch-shuffled minibatches instead of uniform");

    std::string eval_model, eval_input;
    double eval_threshold = 0.01;
    CLI::App* eval = app.add_subcommand(
        "eval", "score a saved model on a tensor file");
    eval->add_option("--model", eval_model, "model directory")->required();
    eval->add_option("--input", eval_input, "tensor file")->required();
    eval->add_option("--rank-threshold", eval_threshold,
                     "relative lambda threshold");

    std::vector<index_t> synth_dims;
    int synth_rank = 0, synth_significant = 0;
    double synth_scale = 100.0;
    std::vector<double> synth_a{0.1};
    double synth_g = 1.0, synth_c = 1.0, synth_eps = -1.0;
    std::uint64_t synth_seed = 0;
    std::string synth_outdir;
    CLI::App* synth = app.add_subcommand(
        "synth", "generate a ground-truth tensor from the model");
    synth->add_option("--dims", synth_dims, "mode sizes, comma separated")
        ->required()
        ->delimiter(',');
    synth->add_option("--rank", synth_rank, "rank upper bound R")
        ->required()
        ->check(CLI::PositiveNumber);
    synth->add_option("--significant", synth_significant,
                      "number of planted significant components")
        ->required();
    synth->add_option("--lambda-scale", synth_scale,
                      "weight of each significant component");
    synth->add_option("--a", synth_a, "Dirichlet concentration")
        ->delimiter(',');
    synth->add_option("--g", synth_g, "gamma shape g");
    synth->add_option("--c", synth_c, "beta concentration c");
    synth->add_option("--epsilon", synth_eps, "beta mean (default 1/R)");
    synth->add_option("--seed", synth_seed, "random seed");
    synth->add_option("--outdir", synth_outdir, "output directory")
        ->required();

    std::string topics_model, topics_vocab;
    int topics_mode = -1, topics_top = 10;
    CLI::App* topics = app.add_subcommand(
        "topics", "top entities per factor for one mode");
    topics->add_option("--model", topics_model, "model directory")
        ->required();
    topics->add_option("--mode", topics_mode, "tensor mode to rank")
        ->required();
    topics->add_option("--top", topics_top, "entities per factor");
    topics->add_option("--vocab", topics_vocab,
                       "label file, one label per entity index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (fit->parsed()) return cmd_fit(fit_args);
        if (eval->parsed())
            return cmd_eval(eval_model, eval_input, eval_threshold);
        if (synth->parsed())
            return cmd_synth(synth_dims, synth_rank, synth_significant,
                             synth_scale, synth_a, synth_g, synth_c,
                             synth_eps, synth_seed, synth_outdir);
        if (topics->parsed())
            return cmd_topics(topics_model, topics_mode, topics_top,
                              topics_vocab);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
