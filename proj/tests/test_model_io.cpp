#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gestop/model_io.hpp"
#include "test_util.hpp"

using namespace gestop;
using namespace gestop::nn;
using gestop::test_util::error_code;

namespace {

template <class Net>
void expect_same_weights(Net a, Net b) {
  auto pa = parameters(a);
  auto pb = parameters(b);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    ASSERT_EQ(pa[k].size(), pb[k].size());
    EXPECT_EQ(std::memcmp(pa[k].data(), pb[k].data(), pa[k].size() * sizeof(double)), 0) << k;
  }
  EXPECT_EQ(a.labels, b.labels);
}

}  // namespace

TEST(ModelIo, StaticRoundTripIsBitExact) {
  const auto net = make_static_net({"none", "open palm", "fist"}, 17);
  const auto text = serialize_model(net);
  const auto back = std::get<StaticNet>(parse_model(text));
  expect_same_weights(net, back);
  EXPECT_EQ(serialize_model(back), text);
}

TEST(ModelIo, DynamicRoundTripIsBitExact) {
  const auto net = make_dynamic_net({"swipe_up", "circle"}, 3, 6, 5);
  const auto back = std::get<DynamicNet>(parse_model(serialize_model(net)));
  expect_same_weights(net, back);
}

TEST(ModelIo, HeaderCarriesVersionsLabelsAndSizes) {
  const auto text = serialize_model(make_static_net({"none", "a"}, 1, 4));
  EXPECT_EQ(text.rfind("gestop-model v=1\nfeature-layout v=1\nkind static\nlabels 2\nnone\na\nsizes 49 4 2\n", 0), 0u);
  EXPECT_EQ(text.substr(text.size() - 4), "end\n");
}

TEST(ModelIo, FileRoundTrip) {
  const auto dir = gestop::test_util::temp_dir("model_io");
  const auto net = make_dynamic_net({"a", "b", "c"}, 9, 4, 3);
  save_model(net, dir / "sub" / "m.model");
  expect_same_weights(net, load_model_as<DynamicNet>(dir / "sub" / "m.model"));
  EXPECT_EQ(error_code([&] { load_model_as<StaticNet>(dir / "sub" / "m.model"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(error_code([&] { load_model(dir / "missing.model"); }), ErrorCode::IOFailure);
  EXPECT_FALSE(std::filesystem::exists(dir / "sub" / "m.model.tmp"));
}

TEST(ModelIo, RejectsOtherVersions) {
  auto text = serialize_model(make_static_net({"none", "a"}, 1, 4));
  auto bumped = text;
  bumped.replace(0, std::string("gestop-model v=1").size(), "gestop-model v=2");
  EXPECT_EQ(error_code([&] { parse_model(bumped); }), ErrorCode::IncompatibleModelVersion);
  auto layout = text;
  layout.replace(layout.find("feature-layout v=1"), 18, "feature-layout v=7");
  EXPECT_EQ(error_code([&] { parse_model(layout); }), ErrorCode::IncompatibleModelVersion);
}

TEST(ModelIo, RejectsCorruptFiles) {
  const auto text = serialize_model(make_static_net({"none", "a"}, 1, 4));
  // Every strict prefix is truncated somewhere and must be rejected.
  for (std::size_t cut = 0; cut < text.size(); cut += 7) {
    EXPECT_EQ(error_code([&] { parse_model(text.substr(0, cut)); }), ErrorCode::CorruptModelFile) << cut;
  }
  auto bad_value = text;
  bad_value.replace(bad_value.find("tensor hidden.bias 4 1\n") + 23, 1, "x");
  EXPECT_EQ(error_code([&] { parse_model(bad_value); }), ErrorCode::CorruptModelFile);
  auto bad_shape = text;
  bad_shape.replace(bad_shape.find("sizes 49 4 2"), 12, "sizes 48 4 2");
  EXPECT_EQ(error_code([&] { parse_model(bad_shape); }), ErrorCode::CorruptModelFile);
  auto bad_kind = text;
  bad_kind.replace(bad_kind.find("kind static"), 11, "kind fuzzy!");
  EXPECT_EQ(error_code([&] { parse_model(bad_kind); }), ErrorCode::CorruptModelFile);
}

TEST(ModelIo, CorruptErrorCarriesLine) {
  const auto text = serialize_model(make_static_net({"none", "a"}, 1, 4));
  try {
    parse_model(text.substr(0, text.find("sizes")));
    FAIL();
  } catch (const Error& e) {
    ASSERT_TRUE(e.line());
    EXPECT_EQ(*e.line(), 6u);
  }
}
