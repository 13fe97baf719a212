// SPDX-License-Identifier: Apache-2.0
//
// uwbsr: joint detection and estimation of specular multipath components
// Copyright (C) 2026 The uwbsr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"
#include "uwbsr/binary_io.hpp"
#include "uwbsr/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace uwbsr;
using namespace uwbsr::testing;

namespace
{
    const std::filesystem::path scratch = std::filesystem::temp_directory_path() / "uwbsr_config_io_test";

    void write_text(const std::filesystem::path &p, const std::string &text)
    {
        std::filesystem::create_directories(p.parent_path());
        std::ofstream(p) << text;
    }

    int run_cli(const std::string &args)
    {
        const std::string cmd = std::string(UWBSR_CLI_PATH) + " " + args + " > " + (scratch / "cli.log").string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    const char *small_config = R"({
      "geometry": {"type": "grid", "rows": 2, "cols": 2, "spacing_m": 0.02},
      "spectrum": {"shape": "rrc", "rolloff": 0.6, "bandwidth_hz": 1.6e9, "center_frequency_hz": 6e9, "samples": 27},
      "dmc": {"beta_s": 3.3356409519815204e-9, "theta_s": 5e-9, "xi": 1.8},
      "scenario": {"mode": "kronecker", "snr_db": 25, "sdr_db": 0, "seed": 3,
                   "placement": {"rule": "fixed", "components": [{"tau_s": 6e-9, "phi_deg": 30, "amp_re": 1, "amp_im": 0}]}},
      "estimator": {"max_components": 4, "epsilon": 0.01},
      "metrics": {"trials": 3, "threads": 1}
    })";
}

TEST_CASE("binary dump layout and round trip")
{
    std::filesystem::create_directories(scratch);
    std::mt19937_64 rng(1);
    CMat m(3, 2);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 2; ++j)
            m(i, j) = cplx(uniform(rng, -1, 1), uniform(rng, -1, 1));
    const auto p = scratch / "m.bin";
    write_matrix(p, m);
    CHECK(std::filesystem::file_size(p) == 16 + 6 * 16);
    std::ifstream is(p, std::ios::binary);
    unsigned char hdr[16];
    is.read(reinterpret_cast<char *>(hdr), 16);
    CHECK(hdr[0] == 3);
    CHECK(hdr[8] == 2);
    for (int i = 1; i < 8; ++i)
    {
        CHECK(hdr[i] == 0);
        CHECK(hdr[8 + i] == 0);
    }
    double first[2];
    is.read(reinterpret_cast<char *>(first), 16);
    // row-major: second complex value is (0, 1)
    double second[2];
    is.read(reinterpret_cast<char *>(second), 16);
    CHECK(first[0] == m(0, 0).real());
    CHECK(second[1] == m(0, 1).imag());
    CHECK(read_matrix(p) == m);

    const CVec v = random_cvec(rng, 7);
    write_vector(scratch / "v.bin", v);
    CHECK(read_vector(scratch / "v.bin") == v);
    CHECK_THROWS(read_vector(p));

    std::filesystem::resize_file(p, 40);
    CHECK_THROWS(read_matrix(p));
}

TEST_CASE("config parsing")
{
    const AppConfig c = parse_config(small_config);
    const ExperimentConfig &x = c.experiment;
    CHECK(x.scenario.geometry.size() == 4);
    CHECK(x.scenario.spectrum.size() == 27);
    CHECK(x.scenario.placement.kind == PlacementRule::Kind::fixed);
    CHECK(x.scenario.placement.fixed.at(0).psi.phi == rel(pi / 6.0).epsilon(1e-14));
    CHECK(x.scenario.domain.max_delay() == rel(x.scenario.spectrum.alias_period()));
    CHECK(x.epsilon.value() == 0.01);
    CHECK(x.estimator.max_components == 4);
    CHECK(x.trials == 3);
    CHECK(x.metrics.rrl_angle == rel(56.0 * pi / 180.0));
    CHECK(c.estimator_context().dimension() == 108);

    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"geometry": {"rowz": 3}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"extra": {}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"spectrum": {"samples": "many"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"scenario": {"mode": "nope"}})"), ConfigError);
    CHECK_THROWS_AS(load_config(scratch / "missing.json"), ConfigError);
}

TEST_CASE("result JSON uses the documented component fields")
{
    EstimationResult r;
    r.components = {DispersionVector(1e-9, 0.5)};
    r.gammas = {2.0};
    r.mu = CVec::Constant(1, cplx(0.3, -0.4));
    r.sigma = CMat::Identity(1, 1);
    r.eta_hat.dps = GammaDps(1e-9, 5e-9, 1.8, 30e-9);
    const auto j = nlohmann::json::parse(estimation_result_json(r));
    const auto &c = j.at("components").at(0);
    CHECK(c.at("tau_s").get<double>() == 1e-9);
    CHECK(c.at("phi_rad").get<double>() == 0.5);
    CHECK(c.at("amp_re").get<double>() == 0.3);
    CHECK(c.at("amp_im").get<double>() == -0.4);
    CHECK(c.at("gamma").get<double>() == 2.0);
}

TEST_CASE("command line round trip and exit codes")
{
    std::filesystem::create_directories(scratch);
    const auto cfg = scratch / "small.json";
    write_text(cfg, small_config);

    const auto obs = scratch / "obs.bin";
    REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " + obs.string()) == 0);
    CHECK(read_vector(obs).size() == 108);
    CHECK(std::filesystem::exists(obs.string() + ".json"));

    const auto res = scratch / "result.json";
    REQUIRE(run_cli("estimate --config " + cfg.string() + " --obs " + obs.string() + " --out " + res.string() +
                    " --trace " + (scratch / "trace.csv").string()) == 0);
    std::ifstream rs(res);
    const auto j = nlohmann::json::parse(rs);
    REQUIRE(j.at("components").size() >= 1);
    // the fixed component is strong (about 25 dB): one of the detections must sit on it
    bool found = false;
    for (const auto &c : j.at("components"))
        found = found || (std::abs(c.at("tau_s").get<double>() - 6e-9) < 5e-11 &&
                          std::abs(wrap_angle(c.at("phi_rad").get<double>() - pi / 6.0)) < 0.1);
    CHECK(found);

    CHECK(run_cli("threshold --config " + cfg.string() + " --epsilon 0.01") == 0);
    CHECK(run_cli("evaluate --config " + cfg.string() + " --trials 2 --out " + (scratch / "eval").string()) == 0);
    CHECK(std::filesystem::exists(scratch / "eval" / "trials.csv"));

    // config errors
    write_text(scratch / "bad.json", R"({"geometry": {"bogus": 1}})");
    CHECK(run_cli("simulate --config " + (scratch / "bad.json").string() + " --out " + obs.string()) == 2);
    CHECK(run_cli("threshold --config " + cfg.string() + " --epsilon 1e6") == 2);
    CHECK(run_cli("simulate --out x.bin") == 2);
    CHECK(run_cli("estimate --config " + cfg.string() + " --obs " + (scratch / "m.bin").string() + " --out " +
                  res.string()) != 0);

    // numerical failure: full wideband covariance beyond the dimension guard
    write_text(scratch / "huge.json", R"({
      "geometry": {"type": "grid", "rows": 10, "cols": 10, "spacing_m": 0.02},
      "spectrum": {"samples": 54},
      "scenario": {"mode": "full_wideband", "sdr_db": 0}
    })");
    CHECK(run_cli("simulate --config " + (scratch / "huge.json").string() + " --out " + obs.string()) == 3);
    std::filesystem::remove_all(scratch);
}
