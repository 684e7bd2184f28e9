#include "doctest.h"

#include "stmc/config.hpp"
#include "stmc/report.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace stmc;

namespace {

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "test.cfg");
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("values and comments") {
  const auto c = parse("# header\nfamily = space_time_ar\n\nK=3  # rank\nrate = 2.5e-3\nflag = yes\nlist = a, b ,c\n");
  CHECK(c.get_string("family") == "space_time_ar");
  CHECK(c.get_int("K") == 3);
  CHECK(c.get_double("rate") == doctest::Approx(2.5e-3));
  CHECK(c.get_bool("flag"));
  CHECK(c.get_list("list") == std::vector<std::string>{"a", "b", "c"});
  CHECK(c.get_int("missing", 7) == 7);
  CHECK(c.echo() == "K = 3\nfamily = space_time_ar\nflag = yes\nlist = a, b ,c\nrate = 2.5e-3\n");
}

TEST_CASE("errors name the file, line and key") {
  CHECK(message_of([] { parse("a = 1\nnot a pair\n"); }).find("test.cfg:2") != std::string::npos);
  CHECK(message_of([] { parse("a = 1\na = 2\n"); }).find("duplicate key 'a'") != std::string::npos);
  const auto c = parse("x = 1\nK = three\n");
  const auto m = message_of([&] { c.get_int("K"); });
  CHECK(m.find("test.cfg:2") != std::string::npos);
  CHECK(m.find("'K'") != std::string::npos);
  CHECK(message_of([&] { c.require({"x", "chains"}); }).find("'chains'") != std::string::npos);
  CHECK(message_of([&] { c.reject_unknown({"x"}); }).find("unknown key 'K'") != std::string::npos);
  CHECK_THROWS_AS(c.get_bool("x2"), ConfigError);
  CHECK_THROWS_AS(Config::load("/nonexistent/stmc.cfg"), ConfigError);
}

TEST_CASE("command-line values override the file") {
  auto c = parse("chains = 4\n");
  c.set("chains", "2");
  CHECK(c.get_int("chains") == 2);
  c.set("K", "x");
  CHECK(message_of([&] { c.get_int("K"); }).find("command line") != std::string::npos);
}

TEST_CASE("bundled configs parse") {
  for (const auto& e : std::filesystem::directory_iterator(std::filesystem::path(STMC_SOURCE_DIR) / "configs")) {
    CAPTURE(e.path().string());
    CHECK_NOTHROW(Config::load(e.path()));
  }
}

}  // TEST_SUITE

TEST_SUITE("report") {

TEST_CASE("diagnostics of a draw set") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  DrawSet d;
  d.parameter_names = {"a", "b"};
  for (int c = 0; c < 2; ++c) {
    Eigen::MatrixXd m(200, 2);
    for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = z(rng);
    m.col(1).setConstant(3.0);
    d.chains.push_back(m);
    ChainStats s;
    s.step_size = 0.5 + c;
    s.divergences = c;
    d.stats.push_back(s);
    Eigen::MatrixXd p(200, 3);
    for (Eigen::Index j = 0; j < p.size(); ++j) p.data()[j] = std::floor(5.0 + 2.0 * z(rng));
    std::vector<bool> g(200, false);
    if (c == 1) {
      p.row(0).setConstant(-1.0);
      g[0] = true;
    }
    d.predictive.push_back(p);
    d.guarded.push_back(g);
  }
  d.masked_cells = {{0, 1}, {0, 2}, {1, 2}};
  const auto r = diagnose(d);
  REQUIRE(r.parameters.size() == 2);
  CHECK(r.parameters[0].name == "a");
  CHECK(r.parameters[0].rhat.value < 1.05);
  CHECK(r.parameters[1].rhat.flagged);
  CHECK(r.parameters[1].mean == 3.0);
  CHECK(r.predictive_rhat.size() == 3);
  CHECK(r.mean_predictive_rhat < 1.05);
  CHECK(r.divergences == 1);
  CHECK(r.step_sizes == std::vector<double>{0.5, 1.5});
  CHECK(r.guarded_fraction == doctest::Approx(1.0 / 400.0));

  const auto path = std::filesystem::temp_directory_path() / "stmc_report_test.csv";
  write_fit_report(path, r, "header");
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("mean_predictive_rhat") != std::string::npos);
  CHECK(text.find("parameter,mean,sd,rhat,ess_bulk,flagged") != std::string::npos);
  CHECK(text.find("\"b\",3,") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("svg plots") {
  std::vector<AttSeries> series;
  for (long t = 1; t <= 5; ++t) {
    AttSeries s;
    s.time = t;
    s.summary = {static_cast<double>(t) - 3.0, static_cast<double>(t) - 4.0, static_cast<double>(t) - 2.0};
    series.push_back(s);
  }
  const auto svg = att_svg(series, 3, "A & B");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("A &amp; B") != std::string::npos);
  CHECK(svg.find("class=\"band\"") != std::string::npos);
  CHECK(svg.find("class=\"zero\"") != std::string::npos);
  CHECK(svg.find("class=\"treatment-start\"") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);

  const auto scree = scree_svg(Eigen::Vector3d(0.7, 0.2, 0.1), "scree");
  std::size_t bars = 0;
  for (auto p = scree.find("class=\"bar\""); p != std::string::npos; p = scree.find("class=\"bar\"", p + 1)) ++bars;
  CHECK(bars == 3);
  CHECK(scree.find("data-fraction=\"0.7\"") != std::string::npos);
}

}  // TEST_SUITE
