#include <gtest/gtest.h>

#include "cxrnet/arch.hpp"
#include "cxrnet/errors.hpp"

using namespace cxr;

namespace {

std::size_t count_kind(const ArchitectureSpec& s, const std::string& tag) {
  std::size_t n = 0;
  for (const auto& l : s.layers) n += kind_tag(l.kind) == tag;
  return n;
}

std::vector<std::size_t> pooled_extents(const ArchitectureSpec& s) {
  const auto shapes = infer_shapes(s);
  std::vector<std::size_t> out = {s.height};
  for (std::size_t i = 0; i < s.layers.size(); ++i)
    if (kind_tag(s.layers[i].kind) == "maxpool") out.push_back(shapes[i][0]);
  return out;
}

std::size_t conv_closed_form(std::size_t k, std::size_t cin, std::size_t cout) { return k * k * cin * cout + cout; }

}  // namespace

TEST(Vgg16, RowSequenceAndNames) {
  const ArchitectureSpec s = vgg16_spec();
  EXPECT_EQ(s.layers.size(), 26u);
  EXPECT_EQ(count_kind(s, "conv"), 13u);
  EXPECT_EQ(count_kind(s, "maxpool"), 5u);
  EXPECT_EQ(s.layers.front().name, "2D-Conv_111");
  EXPECT_EQ(s.layers.back().name, "Out_1");
  std::vector<std::string> block3;
  for (const auto& l : s.layers)
    if (const auto* c = std::get_if<spec::Conv2D>(&l.kind); c && c->filters == 256) block3.push_back(l.name);
  EXPECT_EQ(block3, (std::vector<std::string>{"2D-Conv_131", "2D-Conv_132", "2D-Conv_133"}));
  const auto* drop = std::get_if<spec::Dropout>(&s.layers[s.layers.size() - 2].kind);
  ASSERT_NE(drop, nullptr);
  EXPECT_EQ(drop->p, 0.3);
  // Flat tail order: dense 4096, 4096, 1000, batch norm, dense 256, dropout, output.
  std::vector<std::string> tail;
  for (std::size_t i = 18; i < 25; ++i) tail.push_back(kind_tag(s.layers[i].kind));
  EXPECT_EQ(tail, (std::vector<std::string>{"flatten", "dense", "dense", "dense", "batchnorm", "dense", "dropout"}));
}

TEST(Vgg16, ShapePipelineAt182) {
  const ArchitectureSpec s = vgg16_spec();
  EXPECT_EQ(pooled_extents(s), (std::vector<std::size_t>{182, 91, 45, 22, 11, 5}));
  const auto shapes = infer_shapes(s);
  EXPECT_EQ(shapes[18], (Shape{12800}));
  EXPECT_EQ(shapes.back(), (Shape{3}));
}

TEST(Vgg16, ShapePipelineAt32) {
  const ArchitectureSpec s = vgg16_spec(3, 0.3, 32, 32);
  EXPECT_EQ(pooled_extents(s), (std::vector<std::size_t>{32, 16, 8, 4, 2, 1}));
  EXPECT_EQ(infer_shapes(s)[18], (Shape{512}));
}

TEST(Vgg19, ThreeInsertions) {
  const ArchitectureSpec a = vgg16_spec(), b = vgg19_spec();
  EXPECT_EQ(count_kind(b, "conv"), 16u);
  std::vector<LayerSpec> stripped;
  for (const auto& l : b.layers)
    if (l.name != "2D-Conv_134" && l.name != "2D-Conv_144" && l.name != "2D-Conv_154") stripped.push_back(l);
  EXPECT_EQ(stripped, a.layers);
  auto pos = [&](const std::string& n) {
    for (std::size_t i = 0; i < b.layers.size(); ++i)
      if (b.layers[i].name == n) return i;
    return b.layers.size();
  };
  EXPECT_EQ(pos("2D-Conv_134"), pos("2D-Conv_133") + 1);
  EXPECT_EQ(pos("2D-Conv_144"), pos("2D-Conv_143") + 1);
  EXPECT_EQ(pos("2D-Conv_154"), pos("2D-Conv_153") + 1);
}

TEST(Shapes, FlattenOnRankOneIsSpecError) {
  ArchitectureSpec s = mini_vgg_spec();
  s.layers.insert(s.layers.begin() + 7, LayerSpec{"Flat_extra", spec::Flatten{}});
  try {
    infer_shapes(s);
    FAIL();
  } catch (const SpecError& e) {
    EXPECT_NE(std::string(e.what()).find("Flat_extra"), std::string::npos) << e.what();
  }
}

TEST(Shapes, DenseBeforeFlattenIsSpecError) {
  ArchitectureSpec s;
  s.height = s.width = 8;
  s.layers = {{"d", spec::Dense{4}}, {"o", spec::SoftmaxOutput{3}}};
  EXPECT_THROW(infer_shapes(s), SpecError);
}

TEST(Shapes, HoldForAnyInputAtLeast32) {
  for (std::size_t h : {32u, 33u, 47u, 64u, 100u, 182u, 224u}) {
    EXPECT_NO_THROW(validate_spec(vgg16_spec(3, 0.3, h, h + 3))) << h;
    EXPECT_NO_THROW(validate_spec(vgg19_spec(3, 0.3, h + 1, h))) << h;
  }
}

TEST(Params, ClosedFormCounts) {
  const ParamCount pc = count_params(vgg16_spec());
  EXPECT_EQ(pc.layers[0].name, "2D-Conv_111");
  EXPECT_EQ(pc.layers[0].total(), 1792u);
  std::size_t conv = 0;
  for (const auto& l : pc.layers)
    if (l.kind == "conv") conv += l.total();
  EXPECT_EQ(conv, 14714688u);
  for (const auto& l : pc.layers)
    if (l.kind == "batchnorm") {
      EXPECT_EQ(l.trainable, 2000u);
      EXPECT_EQ(l.non_trainable, 2000u);
    }
  const std::size_t tail = 12800 * 4096 + 4096 + 4096 * 4096 + 4096 + 4096 * 1000 + 1000 + 4 * 1000 +
                           1000 * 256 + 256 + 256 * 3 + 3;
  EXPECT_EQ(pc.total(), conv + tail);
}

TEST(Params, Vgg19DeltaIsThreeConvs) {
  const std::size_t delta = count_params(vgg19_spec()).total() - count_params(vgg16_spec()).total();
  EXPECT_EQ(delta, conv_closed_form(3, 256, 256) + 2 * conv_closed_form(3, 512, 512));
  EXPECT_EQ(delta, 590080u + 2359808u + 2359808u);
}

TEST(Params, InputSizeOnlyChangesFirstDense) {
  const ParamCount a = count_params(vgg16_spec(3, 0.3, 182, 182));
  const ParamCount b = count_params(vgg16_spec(3, 0.3, 224, 224));
  ASSERT_EQ(a.layers.size(), b.layers.size());
  std::vector<std::string> changed;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (a.layers[i].total() != b.layers[i].total()) changed.push_back(a.layers[i].name);
  EXPECT_EQ(changed, (std::vector<std::string>{"Layer_11"}));
}

TEST(SpecText, RoundTrip) {
  for (const auto& s : {vgg16_spec(), vgg19_spec(2, 0.5, 64, 48), mini_vgg_spec(3, 0.25)}) {
    EXPECT_EQ(parse_spec(format_spec(s)), s);
  }
}

TEST(SpecText, ParsesCommentsAndRejectsGarbage) {
  const std::string text =
      "# tiny\ninput 8x8x3\n\nc1 conv(3,4)\np1 maxpool(2,2)  # halve\nf flatten\nd dense(5)\n"
      "n batchnorm\nq dropout(0.1)\no softmax(3)\n";
  const ArchitectureSpec s = parse_spec(text);
  EXPECT_EQ(s.layers.size(), 7u);
  EXPECT_EQ(s.height, 8u);
  EXPECT_NO_THROW(validate_spec(s));
  EXPECT_THROW(parse_spec("input 8x8x3\nc1 conv(3)\n"), SpecError);
  EXPECT_THROW(parse_spec("input 8x8x3\nc1 wobble(3)\n"), SpecError);
  EXPECT_THROW(parse_spec("c1 conv(3,4)\n"), SpecError);
}

TEST(SpecValidation, DuplicateNamesAndMissingOutput) {
  ArchitectureSpec s = mini_vgg_spec();
  s.layers[1].name = s.layers[0].name;
  EXPECT_THROW(validate_spec(s), SpecError);
  s = mini_vgg_spec();
  s.layers.pop_back();
  EXPECT_THROW(validate_spec(s), SpecError);
  s = mini_vgg_spec();
  std::get<spec::Dropout>(s.layers[s.layers.size() - 2].kind).p = 1.0;
  EXPECT_THROW(validate_spec(s), SpecError);
}
