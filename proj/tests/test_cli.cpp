// Copyright 2026 The NAMformer Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "namformer/artifact.hpp"
#include "namformer/cli.hpp"
#include "namformer/config.hpp"

using namespace namformer;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

const char* kSmallConfig = R"({
  "schema_version": 1,
  "simulation": {"n": 100},
  "model": {"embedding_dim": 8, "layers": 1, "heads": 2, "ffn_width": 8, "head_layers": [8]},
  "training": {"max_epochs": 2, "batch_size": 32}
})";

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name)
      : dir(fs::temp_directory_path() / ("namformer_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    spit(dir / "config.json", kSmallConfig);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string config() const { return path("config.json"); }
};

}  // namespace

TEST_CASE("simulate writes the documented schema and is reproducible") {
  Workspace ws("simulate");
  const Run r = cli({"simulate", "--config", ws.config(), "--seed", "3", "--out", ws.path("d.csv")});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(ws.path("d.csv")));
  REQUIRE(rows.size() == 101);
  CHECK(rows[0] == "x1,x2,x3,cat1,cat2,cat3,y");

  const auto truth = lines(slurp(ws.path("d.truth.csv")));
  CHECK(truth[0] == "row,feature,value,effect,conditional_mean");
  CHECK(truth.size() == 1 + 6 * 100);

  const std::string first = slurp(ws.path("d.csv"));
  REQUIRE(cli({"simulate", "--config", ws.config(), "--seed", "3", "--out", ws.path("d.csv")}).code == 0);
  CHECK(slurp(ws.path("d.csv")) == first);
  REQUIRE(cli({"simulate", "--config", ws.config(), "--seed", "4", "--out", ws.path("e.csv")}).code == 0);
  CHECK(slurp(ws.path("e.csv")) != first);
  CHECK(truth_path_for("a/b/data.csv") == "a/b/data.truth.csv");
}

TEST_CASE("train, eval, shapes, probe and boundcheck on one artifact") {
  Workspace ws("pipeline");
  REQUIRE(cli({"simulate", "--config", ws.config(), "--out", ws.path("d.csv")}).code == 0);
  const Run trained =
      cli({"train", "--config", ws.config(), "--data", ws.path("d.csv"), "--out", ws.path("m.json")});
  REQUIRE_MESSAGE(trained.code == 0, trained.err);
  CHECK(trained.out.find("epochs 2") != std::string::npos);
  CHECK(trained.out.find("validation_mse ") != std::string::npos);
  CHECK(lines(slurp(ws.path("m.json.history.csv"))).size() == 3);

  const Run e1 = cli({"eval", "--model", ws.path("m.json"), "--data", ws.path("d.csv")});
  const Run e2 = cli({"eval", "--model", ws.path("m.json"), "--data", ws.path("d.csv")});
  REQUIRE(e1.code == 0);
  CHECK(e1.out == e2.out);
  CHECK(e1.out.rfind("mse ", 0) == 0);

  const Run sh = cli({"shapes", "--model", ws.path("m.json"), "--out", ws.path("shapes")});
  REQUIRE_MESSAGE(sh.code == 0, sh.err);
  const auto x1 = lines(slurp(ws.path("shapes/x1.csv")));
  CHECK(x1[0] == "x,f_raw,f_centered");
  CHECK(x1.size() == 201);
  const auto cat1 = lines(slurp(ws.path("shapes/cat1.csv")));
  CHECK(cat1[0] == "level,f");
  CHECK(cat1[1].rfind("<unknown>,", 0) == 0);

  const Run pr = cli({"probe", "--model", ws.path("m.json"), "--data", ws.path("d.csv"), "--stage",
                      "contextualized"});
  REQUIRE(pr.code == 0);
  CHECK(pr.out.rfind("stage contextualized\nfeature,r2\nx1,", 0) == 0);
  CHECK(cli({"probe", "--model", ws.path("m.json"), "--data", ws.path("d.csv"), "--stage", "middle"})
            .code == kExitUsage);

  const Run bc = cli({"boundcheck", "--model", ws.path("m.json"), "--data", ws.path("d.csv"),
                      "--p", "0.5", "--samples", "200"});
  CHECK((bc.code == 0 || bc.code == 1));
  CHECK(bc.out.find("verdict ") != std::string::npos);
  CHECK(bc.out.find("feature,lhs,direct_risk,mask_probability,holds\n") != std::string::npos);
  for (const char* p : {"0", "1.5", "-0.1"}) {
    CHECK(cli({"boundcheck", "--model", ws.path("m.json"), "--data", ws.path("d.csv"), "--p", p})
              .code == kExitUsage);
  }

  const ModelArtifact a = load_artifact(ws.path("m.json"));
  CHECK(a.target == "y");
  CHECK(a.ranges.size() == 6);
  CHECK(a.ranges[0].has_value());
  CHECK(!a.ranges[3].has_value());
}

TEST_CASE("usage errors exit with code 2") {
  Workspace ws("usage");
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"simulate"}).code == kExitUsage);
  CHECK(cli({"simulate", "--out", ws.path("x.csv"), "--bogus", "1"}).code == kExitUsage);

  spit(ws.path("noy.csv"), "x1,x2,x3,cat1,cat2,cat3,z\n0.1,0.2,0.3,A,A,A,1\n");
  const Run r = cli({"train", "--config", ws.config(), "--data", ws.path("noy.csv"), "--out",
                     ws.path("m.json")});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("target column") != std::string::npos);

  const Run missing = cli({"eval", "--model", ws.path("absent.json"), "--data", ws.path("noy.csv")});
  CHECK(missing.code != 0);
}

TEST_CASE("config validation names the offending key") {
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"schema_version": 1, "model": {"foo": 1}})"),
                       doctest::Contains("model.foo"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"schema_version": 2})"),
                       doctest::Contains("schema_version"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"model": {}})"), doctest::Contains("schema_version"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"schema_version": 1, "training": {"max_epochs": "ten"}})"),
                       doctest::Contains("training.max_epochs"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("{"), std::invalid_argument);

  const RunConfig c = parse_run_config(R"({"schema_version": 1, "model": {"task": "binary_classification"}})");
  CHECK(c.training.loss == LossKind::kLogloss);
  CHECK(c.feature_specs().size() == 6);

  Workspace ws("config");
  spit(ws.path("bad.json"), R"({"schema_version": 1, "extra": true})");
  const Run r = cli({"simulate", "--config", ws.path("bad.json"), "--out", ws.path("d.csv")});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("extra") != std::string::npos);
}

TEST_CASE("artifacts round-trip bit for bit and detect tampering") {
  Workspace ws("artifact");
  REQUIRE(cli({"simulate", "--config", ws.config(), "--out", ws.path("d.csv")}).code == 0);
  REQUIRE(cli({"train", "--config", ws.config(), "--data", ws.path("d.csv"), "--out",
               ws.path("m.json")})
              .code == 0);
  const std::string text = slurp(ws.path("m.json"));
  const ModelArtifact a = parse_artifact(text);
  CHECK(serialize_artifact(a) == text);

  const NamFormer original = a.build_model();
  save_artifact(a, ws.path("copy.json"));
  const NamFormer copy = load_artifact(ws.path("copy.json")).build_model();
  std::vector<FeatureSpec> specs;
  for (const FeatureEncoder& f : a.encoders.features) specs.push_back(f.spec);
  const Dataset data = read_csv_file(ws.path("d.csv"), specs, "y");
  const EncodedData encoded = encode_dataset(a.encoders, data);
  CHECK(original.predict_eta(encoded) == copy.predict_eta(encoded));

  std::string tampered = text;
  const auto pos = tampered.find("\"values\"");
  REQUIRE(pos != std::string::npos);
  const auto digit = tampered.find_first_of("123456789", pos);
  tampered[digit] = tampered[digit] == '9' ? '8' : static_cast<char>(tampered[digit] + 1);
  CHECK_THROWS_WITH(parse_artifact(tampered), doctest::Contains("checksum"));
  spit(ws.path("tampered.json"), tampered);
  CHECK(cli({"eval", "--model", ws.path("tampered.json"), "--data", ws.path("d.csv")}).code != 0);

  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("gradcheck passes") {
  const Run r = cli({"gradcheck"});
  CHECK(r.code == 0);
  CHECK(r.out.find("verdict pass") != std::string::npos);
}
