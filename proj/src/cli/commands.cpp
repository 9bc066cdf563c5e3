#include "rppgm/cli/commands.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include <CLI11.hpp>

#include "rppgm/diagnostics/diagnostics.hpp"
#include "rppgm/util/format.hpp"

namespace rppgm::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kLandscapeSalt = 0x6c616e64ULL;
constexpr std::uint64_t kDiagSalt = 0x64696167ULL;

std::string num(double x) { return std::isnan(x) ? std::string("nan") : format_double(x); }

void write_config(const RunConfig& cfg) {
    fs::create_directories(cfg.out);
    std::ofstream out(fs::path(cfg.out) / "config.json");
    if (!out) throw Error("cannot write " + (fs::path(cfg.out) / "config.json").string());
    out << config_to_json(cfg).dump(2) << '\n';
}

std::ofstream open_csv(const fs::path& path, const char* header) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << header << '\n';
    return out;
}

double mean_finite(const std::vector<trainer::DiagnosticsRow>& rows, double trainer::DiagnosticsRow::*field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (std::isfinite(r.*field)) {
            sum += r.*field;
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : kNaN;
}

// Oracle value of the last row, else the normalized discounted return of the
// latest policy's episodes.
double final_return(const trainer::TrainState& s, double gamma) {
    if (!s.history.empty() && std::isfinite(s.history.back().J_oracle)) return s.history.back().J_oracle;
    if (s.buffer.empty()) return kNaN;
    const std::size_t tag = s.buffer.latest_tag();
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& ep : s.buffer.episodes()) {
        if (ep.policy_tag != tag) continue;
        double ret = 0.0, disc = 1.0;
        for (const auto& tr : ep.steps) {
            ret += disc * tr.r;
            disc *= gamma;
        }
        sum += (1.0 - gamma) * ret;
        ++n;
    }
    return n ? sum / static_cast<double>(n) : kNaN;
}

// Oracle settings for value-only evaluation: the configured oracle, or
// Monte-Carlo rollouts when none is set.
trainer::TrainConfig value_config(const RunConfig& cfg) {
    trainer::TrainConfig t = cfg.train;
    if (t.diag.oracle == trainer::OracleKind::None) t.diag.oracle = trainer::OracleKind::Apg;
    return t;
}

} // namespace

const char* const kSummaryHeader = "h,sn,final_return,mean_v,mean_b,status";

trainer::TrainState cmd_train(const RunConfig& cfg, const std::optional<fs::path>& resume) {
    write_config(cfg);
    std::optional<trainer::TrainState> start;
    if (resume) start = trainer::load_checkpoint(*resume);
    return trainer::run_training(cfg.train, cfg.out, std::move(start));
}

int cmd_sweep(const RunConfig& cfg) {
    if (!cfg.sweep) throw ConfigError("/sweep", "the sweep command needs a sweep block");
    write_config(cfg);
    std::vector<std::size_t> hs = cfg.sweep->h;
    if (hs.empty()) hs.push_back(cfg.train.estimator.h);
    std::vector<bool> sns = cfg.sweep->sn;
    if (sns.empty()) sns.push_back(cfg.train.policy.sn);

    auto summary = open_csv(fs::path(cfg.out) / "summary.csv", kSummaryHeader);
    int status = 0;
    for (std::size_t h : hs) {
        for (bool sn : sns) {
            RunConfig cell = cfg;
            cell.sweep.reset();
            cell.train.estimator.h = h;
            cell.train.policy.sn = sn;
            cell.train.model.sn = sn;
            cell.out = (fs::path(cfg.out) / ("h" + std::to_string(h) + (sn ? "_sn_on" : "_sn_off"))).string();
            std::vector<std::string> row = {std::to_string(h), sn ? "on" : "off"};
            try {
                auto state = cmd_train(cell);
                row.push_back(num(final_return(state, cell.train.env.gamma)));
                row.push_back(num(mean_finite(state.history, &trainer::DiagnosticsRow::v)));
                row.push_back(num(mean_finite(state.history, &trainer::DiagnosticsRow::b)));
                row.push_back("ok");
            } catch (const NumericError& e) {
                std::cerr << "cell " << cell.out << ": " << e.what() << '\n';
                row.insert(row.end(), {"nan", "nan", "nan", "numeric_error"});
                status = 3;
            } catch (const Error& e) {
                std::cerr << "cell " << cell.out << ": " << e.what() << '\n';
                row.insert(row.end(), {"nan", "nan", "nan", "error"});
                if (status == 0) status = 2;
            }
            summary << csv_row(row);
            summary.flush();
        }
    }
    return status;
}

void cmd_landscape(const RunConfig& cfg, const fs::path& checkpoint) {
    auto state = trainer::load_checkpoint(checkpoint);
    write_config(cfg);
    const auto vcfg = value_config(cfg);
    Rng rng(derive_seed(cfg.train.seed, kLandscapeSalt));
    const auto theta = state.policy.params();
    const auto d1 = diag::filter_normalized_direction(theta, rng);
    const auto d2 = diag::filter_normalized_direction(theta, rng);
    auto value = [&](const ad::ParamVector& p) {
        nets::GaussianNet net = state.policy;
        net.set_params(p);
        if (net.spec().sn) nets::apply_spectral_normalization(net);
        return trainer::oracle_eval(vcfg, net, 0, false)->value;
    };
    auto grid = diag::loss_landscape_slice(theta, d1, d2, cfg.landscape.extent, cfg.landscape.resolution, value);
    auto out = open_csv(fs::path(cfg.out) / "landscape.csv", "u,w,value");
    for (std::size_t i = 0; i < grid.u.size(); ++i)
        for (std::size_t j = 0; j < grid.w.size(); ++j)
            out << csv_row(std::vector<std::string>{num(grid.u[i]), num(grid.w[j]), num(grid.values[i * grid.w.size() + j])});
}

void cmd_diag(const RunConfig& cfg, const fs::path& checkpoint) {
    auto state = trainer::load_checkpoint(checkpoint);
    write_config(cfg);
    std::vector<std::size_t> hs = cfg.diag_h;
    if (hs.empty()) hs.push_back(cfg.train.estimator.h);
    auto oracle = trainer::oracle_eval(cfg.train, state.policy, 0, true);
    auto out = open_csv(fs::path(cfg.out) / "diag.csv", "h,v_single,v_batch,b_t");
    for (std::size_t h : hs) {
        trainer::TrainConfig t = cfg.train;
        t.estimator.h = h;
        auto ctx = trainer::estimator_context(t, state);
        Rng rng(derive_seed(t.seed, kDiagSalt, h));
        auto g = est::estimate_gradient(ctx.inputs, ctx.config, rng);
        diag::Variance v{kNaN, kNaN};
        if (g.per_sample.size() >= 2) v = diag::estimate_gradient_variance(g.per_sample);
        const double b = oracle ? diag::estimate_gradient_bias(g.grad.values, oracle->grad).distance : kNaN;
        out << csv_row(std::vector<std::string>{std::to_string(h), num(v.single), num(v.batch), num(b)});
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Reparameterization policy-gradient experiments"};
    app.require_subcommand(1);
    std::string config_path, out, resume, checkpoint;
    std::optional<std::uint64_t> seed;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run config (JSON)")->required();
        sub->add_option("--out", out, "output directory (overrides the config)");
        sub->add_option("--seed", seed, "base seed (overrides the config)");
    };
    auto* train = app.add_subcommand("train", "train one run");
    common(train);
    train->add_option("--resume", resume, "checkpoint to resume from");
    auto* sweep = app.add_subcommand("sweep", "train every cell of the sweep block");
    common(sweep);
    auto* landscape = app.add_subcommand("landscape", "loss landscape around a checkpoint");
    common(landscape);
    landscape->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    auto* diagnose = app.add_subcommand("diag", "gradient variance and bias per unroll length at a checkpoint");
    common(diagnose);
    diagnose->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (!out.empty()) cfg.out = out;
        if (seed) cfg.train.seed = *seed;
        int status = 0;
        if (train->parsed()) {
            cmd_train(cfg, resume.empty() ? std::nullopt : std::optional<fs::path>(resume));
        } else if (sweep->parsed()) {
            status = cmd_sweep(cfg);
        } else if (landscape->parsed()) {
            cmd_landscape(cfg, checkpoint);
        } else {
            cmd_diag(cfg, checkpoint);
        }
        return status;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace rppgm::cli
