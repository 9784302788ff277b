#include "mind/config.hpp"

#include <gtest/gtest.h>

using namespace mind;

namespace {

std::string config(const std::string& data, const std::string& train, const std::string& extra = "")
{
    return R"({"data": {)" + data + R"(}, "train": {)" + train + "}" + extra + "}";
}

std::string error_of(const std::string& text)
{
    try {
        parse_experiment_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Config, ParsesAllSections)
{
    const auto cfg = parse_experiment_config(config(
        R"("generator": "manifold", "num_modes": 4, "diag_mass": 0.7, "seed": 9)",
        R"("epochs": 12, "lambda": 0.5, "variant": "no_dec", "detach_omega": true)",
        R"(, "sweep": {"variable": "alpha", "values": [0.9, 0.99], "seeds": [5]}, "output_dir": "runs/x")"));
    EXPECT_EQ(cfg.data.generator, GeneratorKind::Manifold);
    EXPECT_EQ(cfg.data.num_modes, 4u);
    EXPECT_DOUBLE_EQ(cfg.data.diag_mass, 0.7);
    EXPECT_EQ(cfg.data.seed, 9u);
    EXPECT_EQ(cfg.train.epochs, 12u);
    EXPECT_DOUBLE_EQ(cfg.train.lambda, 0.5);
    EXPECT_EQ(cfg.train.variant, Variant::NoDec);
    EXPECT_TRUE(cfg.train.detach_omega);
    ASSERT_TRUE(cfg.sweep.has_value());
    EXPECT_EQ(cfg.sweep->values.size(), 2u);
    EXPECT_EQ(cfg.sweep->seeds, std::vector<std::uint64_t>{5});
    EXPECT_EQ(cfg.output_dir, "runs/x");
}

TEST(Config, DefaultsWhenSectionsEmpty)
{
    const auto cfg = parse_experiment_config(config("", ""));
    EXPECT_EQ(cfg.data.num_classes, 4u);
    EXPECT_FALSE(cfg.sweep.has_value());
    EXPECT_EQ(cfg.output_dir, "out");
}

TEST(Config, UnknownKeysNamed)
{
    EXPECT_EQ(error_of(config(R"("colour": 1)", "")), "data.colour: unknown key");
    EXPECT_EQ(error_of(config("", R"("epoch": 1)")), "train.epoch: unknown key");
    EXPECT_EQ(error_of(config("", "", R"(, "extra": 1)")), "extra: unknown key");
}

TEST(Config, TypeErrors)
{
    EXPECT_EQ(error_of(config(R"("num_modes": -1)", "")), "data.num_modes: expected a non-negative integer");
    EXPECT_EQ(error_of(config(R"("diag_mass": "high")", "")), "data.diag_mass: expected a number");
    EXPECT_EQ(error_of(config("", R"("detach_omega": 1)")), "train.detach_omega: expected true or false");
    EXPECT_EQ(error_of(config("", R"("variant": 3)")), "train.variant: expected a string");
    EXPECT_EQ(error_of(R"({"data": [], "train": {}})"), "data: expected an object");
}

TEST(Config, MissingSectionsAndBadJson)
{
    EXPECT_EQ(error_of(R"({"train": {}})"), "data: required section missing");
    EXPECT_EQ(error_of(R"({"data": {}})"), "train: required section missing");
    EXPECT_EQ(error_of("[1]"), "config: top level must be an object");
    EXPECT_NE(error_of("{").find("not valid JSON"), std::string::npos);
}

TEST(Config, RangeChecksRunAfterParsing)
{
    const std::string msg = error_of(config(R"("generator": "epsilon", "epsilon": 0.6)", ""));
    EXPECT_NE(msg.find("epsilon"), std::string::npos);
    EXPECT_NE(msg.find("0.5"), std::string::npos);
    EXPECT_FALSE(error_of(config(R"("diag_mass": 0.4)", "")).empty());
    EXPECT_FALSE(error_of(config("", "", R"(, "sweep": {"seeds": []})")).empty());
    EXPECT_FALSE(error_of(config("", R"("variant": "fancy")")).empty());
}

TEST(Config, MissingFile)
{
    EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), ConfigError);
}
