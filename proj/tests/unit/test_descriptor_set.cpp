#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "replica/descriptor_set.hpp"
#include "replica/error.hpp"
#include "synth.hpp"

namespace replica {
namespace {

DescriptorSet small_set() {
  DescriptorSet s("train", DescriptorKind::Imported, 3);
  s.add(ClipId("a"), std::vector<float>{1, 2, 3});
  s.add(ClipId("b b"), std::vector<float>{-1, 0.5f, 0});
  s.add(ClipId("silent"), std::vector<float>{0, 0, 0}, true);
  return s;
}

TEST(DescriptorSet, AddValidatesRows) {
  DescriptorSet s("c", DescriptorKind::Imported, 2);
  EXPECT_THROW(s.add(ClipId("x"), std::vector<float>{1, 2, 3}), ContractError);
  EXPECT_THROW(s.add(ClipId("x"), std::vector<float>{1, NAN}), ContractError);
  EXPECT_THROW(s.add(ClipId("x"), std::vector<float>{1, INFINITY}), ContractError);
  EXPECT_THROW(s.add(ClipId("tab\tid"), std::vector<float>{1, 2}), ContractError);
  EXPECT_THROW(s.add(ClipId(""), std::vector<float>{1, 2}), ContractError);
  s.add(ClipId("x"), std::vector<float>{1, 2});
  EXPECT_THROW(s.add(ClipId("x"), std::vector<float>{1, 2}), ContractError);
  EXPECT_EQ(s.size(), 1u);
}

TEST(DescriptorSet, MelKindRequires1712Dims) {
  EXPECT_THROW(DescriptorSet("c", DescriptorKind::Mel, 16), ContractError);
  EXPECT_NO_THROW(DescriptorSet("c", DescriptorKind::Mel, kMelDescriptorDim));
  EXPECT_THROW(DescriptorSet("c", DescriptorKind::Imported, 0), ContractError);
}

TEST(DescriptorSet, SelectReordersAndListsMissingIds) {
  const DescriptorSet s = small_set();
  const DescriptorSet r = s.select({ClipId("silent"), ClipId("a")});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.id(0), ClipId("silent"));
  EXPECT_TRUE(r.degenerate(0));
  EXPECT_EQ(r.row(1)[2], 3.0f);
  try {
    s.select({ClipId("a"), ClipId("nope"), ClipId("gone")});
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(e.items(), (std::vector<std::string>{"nope", "gone"}));
  }
}

TEST(DescriptorSet, AllDegenerate) {
  DescriptorSet s("c", DescriptorKind::Imported, 2);
  s.add(ClipId("z"), std::vector<float>{0, 0});
  s.add(ClipId("f"), std::vector<float>{1, 1}, true);
  EXPECT_TRUE(s.all_degenerate());
  s.add(ClipId("g"), std::vector<float>{1, 1});
  EXPECT_FALSE(s.all_degenerate());
}

TEST(DescriptorFile, RoundTripsEverything) {
  DescriptorSet s = small_set();
  s.set_provenance(R"({"command":"extract"})");
  const DescriptorSet back = decode_descriptor_file(encode_descriptor_file(s));
  EXPECT_EQ(back.corpus_id(), "train");
  EXPECT_EQ(back.kind(), DescriptorKind::Imported);
  EXPECT_EQ(back.dim(), 3u);
  EXPECT_EQ(back.ids(), s.ids());
  EXPECT_EQ(back.values(), s.values());
  EXPECT_TRUE(back.degenerate(2));
  EXPECT_FALSE(back.degenerate(0));
  EXPECT_EQ(back.provenance(), s.provenance());
  EXPECT_EQ(encode_descriptor_file(back), encode_descriptor_file(s));
}

TEST(DescriptorFile, LayoutMatchesDocumentedOffsets) {
  const std::string bytes = encode_descriptor_file(small_set());
  EXPECT_EQ(bytes.substr(0, 4), "ADSC");
  auto u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[off + i]);
    return v;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);
  EXPECT_EQ(u32(9), 3u);
  EXPECT_EQ(u32(13), 3u);
  EXPECT_EQ(u32(17), 0u);
  EXPECT_EQ(std::bit_cast<float>(u32(21)), 1.0f);
  EXPECT_EQ(std::bit_cast<float>(u32(21 + 4 * 3)), -1.0f);
  const std::size_t index_pos = 21 + 4 * 9;
  EXPECT_EQ(bytes.substr(index_pos + 8),
            "#corpus\ttrain\n0\ta\n1\tb b\n2\tsilent\tdegenerate\n");
}

TEST(DescriptorFile, EmptySetRoundTrips) {
  DescriptorSet s("nothing", DescriptorKind::Mel, kMelDescriptorDim);
  const DescriptorSet back = decode_descriptor_file(encode_descriptor_file(s));
  EXPECT_TRUE(back.empty());
  EXPECT_EQ(back.dim(), kMelDescriptorDim);
}

TEST(DescriptorFile, CorruptInputIsAFormatError) {
  const std::string good = encode_descriptor_file(small_set());
  EXPECT_THROW(decode_descriptor_file("ADS"), FormatError);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_descriptor_file(bad_magic), FormatError);
  std::string bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(decode_descriptor_file(bad_version), FormatError);
  EXPECT_THROW(decode_descriptor_file(good.substr(0, good.size() - 3)), FormatError);
  EXPECT_THROW(decode_descriptor_file(good + "extra"), FormatError);
  std::string bad_flag = good;
  bad_flag.replace(bad_flag.find("degenerate"), 10, "degenerato");
  EXPECT_THROW(decode_descriptor_file(bad_flag), FormatError);
}

TEST(DescriptorFile, WriteIsAtomicAndReadable) {
  test::TempDir dir("adsc");
  write_descriptor_file(dir / "x.adsc", small_set());
  EXPECT_FALSE(std::filesystem::exists(dir / "x.adsc.tmp"));
  EXPECT_EQ(read_descriptor_file(dir / "x.adsc").size(), 3u);
  EXPECT_THROW(read_descriptor_file(dir / "missing.adsc"), InputError);
}

TEST(DescriptorSet, ProvenanceMustBeOneLine) {
  DescriptorSet s = small_set();
  EXPECT_THROW(s.set_provenance("a\nb"), ContractError);
}

}  // namespace
}  // namespace replica
