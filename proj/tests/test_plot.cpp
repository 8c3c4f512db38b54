#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <regex>
#include <set>

#include "inflect/plot.hpp"
#include "inflect/report.hpp"

using namespace inflect;

namespace {

const std::string kGoldenDir = INFLECT_GOLDEN_DIR;

PlotSpec under_over_entropy() {
  PlotSpec spec;
  spec.kind = PlotKind::entropy_by_layer;
  spec.title = "attention entropy, shallow-top-k";
  spec.series = {{"UNDER", {2.1, 1.8, 1.2, 0.9, 1.4, 1.9}, {}}, {"OVER", {2.0, 1.5, 0.6, 0.3, 0.9, 1.7}, {}}};
  return spec;
}

std::vector<std::string> tick_labels(const std::string& svg, const std::string& group) {
  const std::size_t begin = svg.find("<g class=\"" + group + "\">");
  const std::size_t end = svg.find("</g>", begin);
  const std::string body = svg.substr(begin, end - begin);
  std::vector<std::string> out;
  const std::regex text(">([^<]+)</text>");
  for (auto it = std::sregex_iterator(body.begin(), body.end(), text); it != std::sregex_iterator(); ++it) {
    out.push_back((*it)[1]);
  }
  return out;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(Svg, UnderOverEntropyMatchesGolden) {
  const std::string svg = render_svg(under_over_entropy());
  const std::string golden_path = kGoldenDir + "/entropy_under_over.svg";
  if (std::getenv("INFLECT_UPDATE_GOLDEN")) write_text_file(golden_path, svg);
  ASSERT_TRUE(std::filesystem::exists(golden_path));
  EXPECT_EQ(svg, read_text_file(golden_path));
  EXPECT_EQ(count(svg, "<polyline"), 2u);
  EXPECT_NE(svg.find("data-label=\"UNDER\""), std::string::npos);
  EXPECT_NE(svg.find("data-label=\"OVER\""), std::string::npos);
}

TEST(Svg, ConstantSeriesIsAHorizontalLineWithSymmetricPadding) {
  PlotSpec spec;
  spec.kind = PlotKind::deltacka_by_layer;
  spec.series = {{"flat", {0.5, 0.5, 0.5, 0.5}, {}}};
  const std::string svg = render_svg(spec);
  EXPECT_EQ(tick_labels(svg, "y-ticks"), (std::vector<std::string>{"0.45", "0.475", "0.5", "0.525", "0.55"}));
  const std::smatch m = [&] {
    std::smatch r;
    const std::regex points("points=\"([^\"]+)\"");
    std::regex_search(svg, r, points);
    return r;
  }();
  const std::regex y_coord(",([0-9.]+)");
  const std::string pts = m[1];
  std::set<std::string> ys;
  for (auto it = std::sregex_iterator(pts.begin(), pts.end(), y_coord); it != std::sregex_iterator(); ++it) {
    ys.insert((*it)[1]);
  }
  EXPECT_EQ(ys.size(), 1u);
}

TEST(Svg, ZeroConstantSeriesGetsUnitPadding) {
  PlotSpec spec;
  spec.kind = PlotKind::paramgrad_by_layer;
  spec.series = {{"frozen", {0.0, 0.0}, {}}};
  EXPECT_EQ(tick_labels(render_svg(spec), "y-ticks"), (std::vector<std::string>{"-1", "-0.5", "0", "0.5", "1"}));
}

TEST(Svg, ScatterUsesDecadeTicks) {
  PlotSpec spec;
  spec.kind = PlotKind::accuracy_vs_params;
  spec.series = {{"selective-lora", {0.9}, {7810.0}}, {"full", {0.95}, {303000.0}}};
  EXPECT_EQ(tick_labels(render_svg(spec), "x-ticks"), (std::vector<std::string>{"1e3", "1e4", "1e5", "1e6"}));
}

TEST(Svg, LabelsAreEscaped) {
  PlotSpec spec;
  spec.series = {{"a<b & \"c\"", {1.0, 2.0}, {}}};
  const std::string svg = render_svg(spec);
  EXPECT_NE(svg.find("a&lt;b &amp; &quot;c&quot;"), std::string::npos);
}

TEST(Svg, RenderingIsDeterministic) {
  EXPECT_EQ(render_svg(under_over_entropy()), render_svg(under_over_entropy()));
}

TEST(Svg, InvalidSpecsAreRejected) {
  PlotSpec spec;
  EXPECT_THROW(render_svg(spec), InvalidInput);
  spec.series = {{"a", {1.0, 2.0}, {}}, {"b", {1.0}, {}}};
  EXPECT_THROW(render_svg(spec), InvalidInput);
  spec.series = {{"a", {1.0, std::nan("")}, {}}};
  EXPECT_THROW(render_svg(spec), InvalidInput);
  spec.kind = PlotKind::accuracy_vs_params;
  spec.series = {{"a", {0.9, 0.8}, {10.0}}};
  EXPECT_THROW(render_svg(spec), InvalidInput);
  spec.series = {{"a", {0.9}, {0.0}}};
  EXPECT_THROW(render_svg(spec), InvalidInput);
  EXPECT_THROW(plot_kind_from_string("histogram"), InvalidInput);
}

TEST(Svg, EveryKindRoundTripsItsName) {
  for (PlotKind k : all_plot_kinds()) EXPECT_EQ(plot_kind_from_string(to_string(k)), k);
}
