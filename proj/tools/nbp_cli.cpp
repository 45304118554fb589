// Command-line front end for the neural bridge process toolkit. Talks to the
// shared library exclusively through the C API in nbp.h; exit codes are the
// API status codes (0 ok, 1 validation, 2 numerical, 3 I/O).

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nbp.h"

namespace {

int finish(nbp_status st) {
    if (st != NBP_OK) std::fprintf(stderr, "error: %s\n", nbp_last_error());
    return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural bridge processes: train, sample and evaluate input-anchored diffusion models"};
    app.require_subcommand(1);

    std::string config, out_dir = "out", out, seed_str;
    long long seed = -1;
    app.add_option("--seed", seed, "global RNG seed (overrides config seeds)");
    app.add_option("--out-dir", out_dir, "directory for run artefacts");
    app.add_option("--config", config, "run-config JSON file");

    // schedule-dump
    auto* sd = app.add_subcommand("schedule-dump", "write per-timestep schedule coefficients as CSV");
    std::string sd_kind = "cosine";
    int sd_T = 500;
    double sd_b0 = 3e-4, sd_b1 = 0.5;
    bool sd_zero = false;
    std::string sd_out = "schedule.csv";
    sd->add_option("--kind", sd_kind, "cosine or linear");
    sd->add_option("--timesteps", sd_T);
    sd->add_option("--beta-start", sd_b0);
    sd->add_option("--beta-end", sd_b1);
    sd->add_flag("--zero-bridge", sd_zero, "force gamma to zero (ablation)");
    sd->add_option("--out", sd_out, "output CSV path");

    // gen-data
    auto* gd = app.add_subcommand("gen-data", "sample GP tasks and write them to a task file");
    std::string gd_out = "tasks.jsonl";
    gd->add_option("--out", gd_out, "output task file (JSON lines)");

    // train
    auto* tr = app.add_subcommand("train", "run the optimization loop");
    std::string tr_resume;
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");

    // sample
    auto* sm = app.add_subcommand("sample", "draw conditional samples for one task");
    std::string sm_ckpt, sm_tasks, sm_out = "samples.csv";
    int sm_n = 128, sm_repaint = 5, sm_task = 0;
    sm->add_option("--checkpoint", sm_ckpt)->required();
    sm->add_option("--task-file", sm_tasks)->required();
    sm->add_option("--task-index", sm_task, "which task of the file (default 0)");
    sm->add_option("--n-samples", sm_n);
    sm->add_option("--repaint", sm_repaint, "RePaint repeats per timestep");
    sm->add_option("--out", sm_out, "output CSV (sample,point,x...,y...)");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint over a task file");
    std::string ev_ckpt, ev_tasks, ev_label, ev_csv = "report.csv", ev_json = "report.json";
    int ev_n = -1, ev_repaint = -1;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--task-file", ev_tasks)->required();
    ev->add_option("--n-samples", ev_n, "conditional samples per task (default from config)");
    ev->add_option("--repaint", ev_repaint, "RePaint repeats (default from config)");
    ev->add_option("--label", ev_label, "report label (default from config)");
    ev->add_option("--out-csv", ev_csv, "per-task records CSV");
    ev->add_option("--out-json", ev_json, "aggregate report JSON");

    // compare
    auto* cp = app.add_subcommand("compare", "diff two evaluation reports");
    std::string cp_a, cp_b, cp_out;
    cp->add_option("report_a", cp_a)->required();
    cp->add_option("report_b", cp_b)->required();
    cp->add_option("--out", cp_out, "verdict JSON path");

    // plot
    auto* pl = app.add_subcommand("plot", "emit static SVG figures");
    std::string pl_samples, pl_task_file, pl_out = "plot.svg";
    std::vector<std::string> pl_losses, pl_labels;
    int pl_task = 0;
    pl->add_option("--samples", pl_samples, "sample CSV for a function-sample panel");
    pl->add_option("--task-file", pl_task_file, "task file for context/target overlay");
    pl->add_option("--task-index", pl_task);
    pl->add_option("--losses", pl_losses, "metrics CSVs for a loss-curve overlay")->expected(-1);
    pl->add_option("--labels", pl_labels, "legend labels for --losses")->expected(-1);
    pl->add_option("--out", pl_out, "output SVG path");

    // verify
    auto* vf = app.add_subcommand("verify", "run the identity suite and print a pass/fail table");
    std::string vf_inject;
    vf->add_option("--inject", vf_inject, "fault injection fixture (test use)")
        ->check(CLI::IsMember({"c-bridge-sign-flip"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (sd->parsed()) {
        nbp_schedule* s = nullptr;
        nbp_status st = nbp_schedule_create(sd_kind.c_str(), sd_T, sd_b0, sd_b1, sd_zero ? 1 : 0, &s);
        if (st == NBP_OK) {
            st = nbp_schedule_dump_csv(s, sd_out.c_str());
            nbp_schedule_free(s);
        }
        if (st == NBP_OK) std::printf("wrote %s (T=%d)\n", sd_out.c_str(), sd_T);
        return finish(st);
    }
    if (gd->parsed()) {
        const nbp_status st = nbp_gen_data(config.c_str(), gd_out.c_str(), seed);
        if (st == NBP_OK) std::printf("wrote %s\n", gd_out.c_str());
        return finish(st);
    }
    if (tr->parsed()) {
        const nbp_status st =
            nbp_train(config.c_str(), out_dir.c_str(), tr_resume.empty() ? nullptr : tr_resume.c_str(), seed);
        if (st == NBP_OK)
            std::printf("training done: %s/checkpoint.nbp, %s/metrics.csv\n", out_dir.c_str(), out_dir.c_str());
        return finish(st);
    }
    if (sm->parsed()) {
        const nbp_status st = nbp_sample(sm_ckpt.c_str(), sm_tasks.c_str(), sm_task, sm_n, sm_repaint, seed,
                                         sm_out.c_str());
        if (st == NBP_OK) std::printf("wrote %s\n", sm_out.c_str());
        return finish(st);
    }
    if (ev->parsed()) {
        const nbp_status st =
            nbp_evaluate(ev_ckpt.c_str(), ev_tasks.c_str(), ev_n, ev_repaint, seed,
                         ev_label.empty() ? nullptr : ev_label.c_str(), ev_csv.c_str(), ev_json.c_str());
        if (st == NBP_OK) std::printf("wrote %s and %s\n", ev_csv.c_str(), ev_json.c_str());
        return finish(st);
    }
    if (cp->parsed()) {
        char* table = nullptr;
        const nbp_status st =
            nbp_compare(cp_a.c_str(), cp_b.c_str(), cp_out.empty() ? nullptr : cp_out.c_str(), &table);
        if (st == NBP_OK && table) {
            std::fputs(table, stdout);
            nbp_string_free(table);
        }
        return finish(st);
    }
    if (pl->parsed()) {
        nbp_status st = NBP_OK;
        if (!pl_samples.empty()) {
            st = nbp_plot_samples(pl_samples.c_str(), pl_task_file.empty() ? nullptr : pl_task_file.c_str(),
                                  pl_task, pl_out.c_str());
        } else if (!pl_losses.empty()) {
            std::vector<const char*> files, names;
            for (const auto& s : pl_losses) files.push_back(s.c_str());
            for (const auto& s : pl_labels) names.push_back(s.c_str());
            st = nbp_plot_losses(files.data(), names.empty() ? nullptr : names.data(),
                                 static_cast<int>(files.size()), pl_out.c_str());
        } else {
            std::fprintf(stderr, "error: plot needs --samples or --losses\n");
            return 1;
        }
        if (st == NBP_OK) std::printf("wrote %s\n", pl_out.c_str());
        return finish(st);
    }
    if (vf->parsed()) {
        char* table = nullptr;
        int failed = 0;
        const nbp_status st = nbp_verify(vf_inject.empty() ? nullptr : vf_inject.c_str(), &table, &failed);
        if (table) {
            std::fputs(table, stdout);
            nbp_string_free(table);
        }
        if (st != NBP_OK) return finish(st);
        return failed == 0 ? 0 : 2;
    }
    return 1;
}
