#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::temp_directory_path() / "hydra_cli_test";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args) {
  fs::create_directories(kTmp);
  const std::string cmd = std::string(HYDRA_BIN) + " " + args + " > " + (kTmp / "out").string() + " 2> " +
                          (kTmp / "err").string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(kTmp / "out");
  r.err = slurp(kTmp / "err");
  return r;
}

fs::path write_file(const std::string& name, const std::string& text) {
  fs::create_directories(kTmp);
  std::ofstream(kTmp / name) << text;
  return kTmp / name;
}

}  // namespace

TEST_CASE("serialize prints one index per line") {
  const auto path = write_file("line.xyz", "0 0 0\n1 1 1\n0.5 0.5 0.5\n0.1 0.1 0.1\n");
  const Run r = run("serialize --curve hilbert --priority xyz --bits 4 " + path.string());
  CHECK(r.code == 0);
  std::istringstream ids(r.out);
  std::multiset<int> seen;
  for (int i; ids >> i;) seen.insert(i);
  CHECK(seen == std::multiset<int>{0, 1, 2, 3});
  CHECK(r.err.find("# serialize") != std::string::npos);

  const Run z = run("serialize --curve zorder --bits 4 " + path.string());
  CHECK(z.code == 0);
  CHECK(z.out == "0\n3\n2\n1\n");
}

TEST_CASE("usage errors exit 1") {
  CHECK(run("serialize --bogus 1").code == 1);
  CHECK(run("").code == 1);
  CHECK(run("serialize --curve peano x.xyz").code == 1);
  CHECK(run("train-toy --set widths=3").code == 1);
}

TEST_CASE("malformed input exits 2 with the line number") {
  const auto path = write_file("bad.xyz", "0 0 0\n1 nope 1\n");
  const Run r = run("serialize " + path.string());
  CHECK(r.code == 2);
  CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("locality-bench writes a TSV table") {
  const Run r = run("locality-bench --n 200 --trials 2 --bits 6");
  CHECK(r.code == 0);
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header.starts_with("trial\t"));
  CHECK(header.find("hilbert_better") != std::string::npos);
  int rows = 0;
  for (std::string l; std::getline(lines, l);) rows += !l.empty();
  CHECK(rows == 2);
}

TEST_CASE("scan-bench reports agreement") {
  const Run r = run("scan-bench --len 64 --dim 4 --state 3 --chunk 8 --repeats 1");
  CHECK(r.code == 0);
  CHECK(r.out.find("max_rel_dev") != std::string::npos);
}

TEST_CASE("train, checkpoint and eval") {
  const auto ckpt = kTmp / "tiny.json";
  const Run t = run("train-toy --preset tiny --epochs 2 --set train_size=8 --set test_size=4 --checkpoint " +
                    ckpt.string());
  CHECK(t.code == 0);
  std::istringstream lines(t.out);
  int records = 0;
  for (std::string l; std::getline(lines, l);) {
    if (l.empty()) continue;
    ++records;
    CHECK(l.find("\"test_acc\"") != std::string::npos);
  }
  CHECK(records == 2);
  REQUIRE(fs::exists(ckpt));
  const Run e = run("eval --preset tiny --set train_size=8 --set test_size=4 --checkpoint " + ckpt.string());
  CHECK(e.code == 0);
  CHECK(e.out.find("test_acc") != std::string::npos);
}

TEST_CASE("config file") {
  const auto cfg = write_file("run.cfg", "# tiny run\nepochs = 1\ntrain_size = 4\ntest_size = 4\n");
  const Run r = run("train-toy --preset tiny --config " + cfg.string());
  CHECK(r.code == 0);
  CHECK(r.err.find("epochs = 1") != std::string::npos);
  const auto bad = write_file("bad.cfg", "epochs = 1\nepoch = 2\n");
  const Run b = run("train-toy --preset tiny --config " + bad.string());
  CHECK(b.code == 1);
  CHECK(b.err.find("line 2") != std::string::npos);
}

TEST_CASE("gradcheck subset passes") {
  const Run r = run("gradcheck --only softplus");
  CHECK(r.code == 0);
  CHECK(r.out.find("softplus\t") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}
