#pragma once

// Pipeline stages over a run directory, and the end-to-end run.
//
// Layout under cfg.out_dir:
//   data/                      synthetic dataset (when [data] root is empty)
//   prepared_<pad>/            registered pairs for one histology padding
//   <model>_<pad>/             log.csv, val.csv, best.msih, last.msih
//   <model>_<pad>/synth/       synthesized val/test PNGs
//   <model>_<pad>/eval_{val,test}.csv
//   report.md, report.csv      test split; report_val.{md,csv} for validation
//   config.ini                 effective configuration

#include "msihist/pipeline/config.hpp"
#include "msihist/pipeline/prepare.hpp"
#include "msihist/pipeline/report.hpp"
#include "msihist/pipeline/train.hpp"

#include <filesystem>

namespace msihist::pipeline {

/// Exclusive ownership of an output directory for one run: creates
/// <dir>/.lock (fails with RuntimeFailure if it exists) and removes it on
/// destruction.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path &dir);
    ~OutputLock();
    OutputLock(const OutputLock &) = delete;
    OutputLock &operator=(const OutputLock &) = delete;

private:
    std::filesystem::path file_;
};

std::filesystem::path prepared_dir(const RunConfig &cfg, imagereg::PadMode pad);
std::filesystem::path variant_dir(const RunConfig &cfg, const Variant &v);

void stage_generate(const RunConfig &cfg);
PreparedSet stage_prepare(const RunConfig &cfg);  // uses cfg.pad
TrainResult stage_train(const RunConfig &cfg, const Variant &v, bool resume = false);
void stage_synth(const RunConfig &cfg, const Variant &v);
void stage_eval(const RunConfig &cfg, const Variant &v);
// Collects every evaluated variant of cfg.variants; writes both reports.
Report stage_report(const RunConfig &cfg);

/// generate (unless [data] root is set) -> prepare each padding in use ->
/// train, synth and eval each variant -> report. Returns the test report.
Report run_all(const RunConfig &cfg);

} // namespace msihist::pipeline
