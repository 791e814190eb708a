#include <gtest/gtest.h>

#include "nuhops/io.hpp"

using namespace nuhops;

namespace {

json base() {
    return json::parse(R"({
        "model": {"coupling": "sz", "n": 4, "omega_a": 1.0, "g": 0.5, "omega_c": 1.0, "kappa": 1.0},
        "propagator": {"dt": 0.01, "t_end": 1.0}
    })");
}

std::string error_of(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, MinimalDefaults) {
    const RunConfig rc = parse_config(base());
    EXPECT_EQ(rc.model.two_s, 4);
    EXPECT_EQ(rc.model.initial_system.back(), cplx(1.0));
    EXPECT_EQ(rc.model.bcf.terms[0].G, cplx(0.25));
    EXPECT_EQ(rc.model.bcf.terms[0].W, cplx(1.0, 1.0));
    EXPECT_EQ(rc.propagator.mode, Mode::nuhops);
    EXPECT_TRUE(rc.propagator.adaptive);
    EXPECT_EQ(rc.observables.stride, 10u);
    EXPECT_EQ(rc.ensemble.trajectories, 1u);
    EXPECT_DOUBLE_EQ(rc.ensemble.t_end, 1.0);
    EXPECT_FALSE(rc.designed_step);
}

TEST(Config, CollectiveCouplingScalesAmplitude) {
    json j = base();
    j["model"]["coupling"] = "sx";
    j["model"]["n"] = 10;
    const RunConfig rc = parse_config(j);
    EXPECT_NEAR(rc.model.bcf.terms[0].G.real(), 0.25 / 10.0, 1e-15);
    EXPECT_TRUE(rc.model.l_op.c_plus == cplx(0.5));
}

TEST(Config, InitialStates) {
    json j = base();
    j["model"]["initial"] = {{"state", "ground"}};
    EXPECT_EQ(parse_config(j).model.initial_system.front(), cplx(1.0));
    j["model"]["initial"] = {{"theta", 0.5}, {"phi", 0.2}};
    EXPECT_EQ(parse_config(j).model.initial_system, spin_coherent(4, 0.5, 0.2));
    j["model"]["initial"] = {{"vector", {0, 0, {0.0, 1.0}, 0, 0}}};
    EXPECT_EQ(parse_config(j).model.initial_system[2], cplx(0.0, 1.0));
    j["model"]["initial"] = {{"vector", {1, 0}}};
    EXPECT_NE(error_of(j).find("model.initial.vector"), std::string::npos);
}

TEST(Config, ExplicitTermsAndErrorPaths) {
    json j = base();
    j["model"].erase("g");
    j["model"].erase("omega_c");
    j["model"].erase("kappa");
    j["bcf"] = {{"terms", {{{"g_re", 0.25}, {"w_re", 1.0}, {"w_im", 1.0}}, {{"g_re", 0.1}, {"g_im", 0.01}, {"w_re", 2.0}}}}};
    const RunConfig rc = parse_config(j);
    ASSERT_EQ(rc.model.terms(), 2u);
    EXPECT_EQ(rc.model.bcf.terms[1].G, cplx(0.1, 0.01));

    j["bcf"]["terms"][1]["w_re"] = -0.5;
    EXPECT_NE(error_of(j).find("bcf.terms[1].w_re"), std::string::npos) << error_of(j);
}

TEST(Config, FieldPathsInErrors) {
    json j = base();
    j["propagator"]["eps_up"] = 2.0;
    EXPECT_NE(error_of(j).find("propagator.eps_up"), std::string::npos);

    j = base();
    j["propagator"]["dtt"] = 0.1;
    EXPECT_NE(error_of(j).find("propagator.dtt: unknown field"), std::string::npos);

    j = base();
    j["model"]["kappa"] = 0.0;
    EXPECT_NE(error_of(j).find("model.kappa"), std::string::npos);

    j = base();
    j["propagator"]["t_end"] = 1.005;
    EXPECT_NE(error_of(j).find("propagator.t_end"), std::string::npos);

    j = base();
    j["model"].erase("n");
    EXPECT_NE(error_of(j).find("model.n: required field is missing"), std::string::npos);

    j = base();
    j["ensemble"] = {{"trajectories", -3}};
    EXPECT_NE(error_of(j).find("ensemble.trajectories"), std::string::npos);

    j = base();
    j["model"]["coupling"] = "sy";
    EXPECT_NE(error_of(j).find("model.coupling"), std::string::npos);
}

TEST(Config, DesignedStepAndFockDims) {
    json j = base();
    j["noise"] = {{"designed_step", {{"t_switch", 0.5}, {"before", {0.5, 0.1}}}}};
    j["propagator"]["adaptive"] = false;
    j["propagator"]["fock_dims"] = 7;
    const RunConfig rc = parse_config(j);
    ASSERT_TRUE(rc.designed_step);
    EXPECT_EQ(rc.designed_step->before, cplx(0.5, 0.1));
    EXPECT_EQ(rc.designed_step->after, cplx(-0.5));
    EXPECT_EQ(rc.propagator.fock_dims, std::vector<int>{7});
    const NoiseSource ns = noise_source(rc);
    EXPECT_EQ(ns.kind, NoiseSource::Kind::fixed);
    EXPECT_EQ(ns.fixed.n_steps(), 100u);
}

TEST(Config, ModelHashIgnoresRunSettings) {
    json j = base();
    const auto h0 = parse_config(j).model_hash();
    j["ensemble"] = {{"workers", 8}, {"master_seed", 3}};
    j["output"] = {{"directory", "elsewhere"}};
    EXPECT_EQ(parse_config(j).model_hash(), h0);
    j["propagator"]["dt"] = 0.005;
    EXPECT_NE(parse_config(j).model_hash(), h0);
    j = base();
    j["output"] = {{"stride", 5}};
    EXPECT_NE(parse_config(j).model_hash(), h0);
}

TEST(Config, ShippedConfigsParse) {
    const std::filesystem::path dir = std::filesystem::path(NUHOPS_SOURCE_DIR) / "configs";
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() != ".json") continue;
        ++n;
        EXPECT_NO_THROW(load_config(e.path())) << e.path();
    }
    EXPECT_GE(n, 5u);
}

TEST(Config, CommentsAllowed) {
    const auto file = std::filesystem::temp_directory_path() / "nuhops_comment.json";
    {
        std::ofstream out(file);
        out << "// header\n" << base().dump(2) << "\n";
    }
    EXPECT_NO_THROW(load_config(file));
    EXPECT_THROW(load_config(file.string() + ".missing"), ConfigError);
    std::filesystem::remove(file);
}

TEST(SeriesCsv, RoundTripIsExact) {
    Series s;
    s.t = {0.0, 0.1, 0.2};
    const std::size_t a = s.add_column("Sz"), b = s.add_column("a");
    s.value[a] = {1.0 / 3.0, -2.5e-17, 7.0};
    s.value[b] = {cplx(0.1, -0.2), cplx(1e300, 3.0), 0.0};
    s.stderr_[a] = {0.0, 0.01, 0.02};
    const auto file = std::filesystem::temp_directory_path() / "nuhops_series.csv";
    write_series_csv(file, s);
    const Series r = read_series_csv(file);
    EXPECT_EQ(r.names, s.names);
    EXPECT_EQ(r.t, s.t);
    EXPECT_EQ(r.value, s.value);
    EXPECT_EQ(r.stderr_[0], s.stderr_[0]);
    EXPECT_TRUE(std::isnan(r.stderr_[1][0]));
    std::ifstream in(file);
    std::string head;
    std::getline(in, head);
    EXPECT_EQ(head, "t,Sz_re,Sz_im,Sz_stderr,a_re,a_im,a_stderr");
    std::filesystem::remove(file);
}
