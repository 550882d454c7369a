// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// End-to-end smoke test of the command-line tool on a tiny corpus.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  std::printf("[%s] %s\n", ok ? "ok" : "FAIL", what.c_str());
  if (!ok) ++failures;
}

int run(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: cli_smoke <avsep-binary> <work-dir>\n";
    return 2;
  }
  const std::string bin = argv[1];
  const std::string work = argv[2];
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string data = work + "/corpus";

  check(run(bin + " gen-data --out " + data +
            " --train 6 --val 2 --test 2 --seed 7 --visual-dim 8 2>/dev/null") == 0,
        "gen-data succeeds");
  check(fs::exists(data + "/train/manifest.tsv"), "train manifest exists");

  check(run(bin + " gen-data --out " + work + "/bad --train 0 --val 1 --test 1 2>" + work +
            "/gen_err.txt") != 0,
        "gen-data rejects an empty split");
  check(slurp(work + "/gen_err.txt").find("empty split") != std::string::npos,
        "empty-split diagnostic names the problem");

  const std::string ckpt = work + "/model.ckpt";
  check(run(bin + " train --data " + data + " --out " + ckpt + " --channels 8" +
            " --visual-depth 2 --audio-depth 2 --decoder-depth 2 --epochs 2 --lr 1e-3" +
            " --seed 3 --log " + work + "/train.log 2>/dev/null >/dev/null") == 0,
        "train writes a checkpoint");
  check(fs::exists(ckpt), "checkpoint exists");

  const std::string mix = data + "/test/rec_00000.mix.wav";
  const std::string avf = data + "/test/rec_00000.avf1";
  check(run(bin + " separate --checkpoint " + ckpt + " --mix " + mix + " --visual " + avf +
            " --out " + work + "/enh.wav --dump-affinity " + work +
            "/aff 2>/dev/null >/dev/null") == 0,
        "separate runs");
  check(fs::exists(work + "/enh.wav"), "enhanced wav exists");
  check(fs::exists(work + "/aff.csv") && fs::exists(work + "/aff.pgm"), "affinity dumps exist");

  // byte-identical on a second run
  check(run(bin + " separate --checkpoint " + ckpt + " --mix " + mix + " --visual " + avf +
            " --out " + work + "/enh2.wav 2>/dev/null >/dev/null") == 0,
        "separate runs twice");
  check(slurp(work + "/enh.wav") == slurp(work + "/enh2.wav"),
        "separation output is deterministic");

  check(run(bin + " eval --data " + data + " --passthrough --report " + work +
            "/pass.csv 2>/dev/null >/dev/null") == 0,
        "passthrough eval runs");
  const std::string pass_csv = slurp(work + "/pass.csv");
  check(pass_csv.find("0.000,0.000") != std::string::npos,
        "passthrough improvement is 0.000");

  check(run(bin + " probe-affinity --synthetic --offset -5 --seed 11 >" + work +
            "/probe.txt 2>/dev/null") == 0,
        "offset probe runs");
  check(slurp(work + "/probe.txt").find("estimated -5") != std::string::npos,
        "offset probe recovers -5");

  check(run(bin + " probe-affinity --synthetic --offset 0 --jitter-t 25 --jitter-tau 8" +
            " --seed 11 >" + work + "/jitter.txt 2>/dev/null") == 0,
        "jitter probe runs");
  check(slurp(work + "/jitter.txt").find("difference 8") != std::string::npos,
        "jitter probe sees the band break");

  if (failures) {
    std::printf("%d smoke checks failed\n", failures);
    return 1;
  }
  std::printf("all smoke checks passed\n");
  return 0;
}
