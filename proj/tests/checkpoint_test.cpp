// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "graft/checkpoint.hpp"
#include "graft/dtype.hpp"
#include "test_support.hpp"

namespace graft {
namespace {

std::vector<std::uint8_t> container(const std::string& header, std::size_t data_bytes) {
  std::vector<std::uint8_t> out;
  detail::append_u64_le(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  out.resize(out.size() + data_bytes, 0);
  return out;
}

Errc code_of(const std::vector<std::uint8_t>& file) {
  try {
    parse_checkpoint(file);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected parse failure";
  return Errc::kInvalidArgument;
}

TEST(Checkpoint, ParsesSingleTensorFile) {
  const std::string header = R"({"w":{"dtype":"F32","shape":[2,2],"data_offsets":[0,16]}})";
  auto file = container(header, 16);
  const float values[4] = {1.0f, -2.0f, 3.5f, 0.25f};
  std::memcpy(file.data() + 8 + header.size(), values, sizeof values);

  const CheckpointManifest m = parse_checkpoint(file);
  ASSERT_EQ(m.tensors().size(), 1u);
  const auto& t = m.tensors()[0];
  EXPECT_EQ(t.name, "w");
  EXPECT_EQ(t.dtype, DType::kF32);
  EXPECT_EQ(t.shape, (std::vector<std::uint64_t>{2, 2}));
  EXPECT_EQ(decode_to_f32(t.dtype, t.data), (std::vector<float>{1.0f, -2.0f, 3.5f, 0.25f}));
}

TEST(Checkpoint, OffsetsPastEndAreMalformed) {
  const std::string header = R"({"w":{"dtype":"F32","shape":[2,2],"data_offsets":[0,32]}})";
  EXPECT_EQ(code_of(container(header, 16)), Errc::kMalformedHeader);
}

TEST(Checkpoint, SerializeParseSerializeIsByteIdentical) {
  CheckpointManifest m;
  m.add({"b", DType::kBF16, {3}, std::vector<std::uint8_t>(6, 0x41)});
  m.add({"a", DType::kF16, {1, 2}, {0x00, 0x3c, 0x00, 0xc0}});
  m.metadata()["format"] = "pt";
  const auto first = serialize_checkpoint(m);
  const auto second = serialize_checkpoint(parse_checkpoint(first));
  EXPECT_EQ(first, second);
  EXPECT_EQ(parse_checkpoint(first), m);
}

TEST(Checkpoint, HeaderIsPaddedToEightBytes) {
  CheckpointManifest m;
  m.add({"x", DType::kF32, {1}, {0, 0, 128, 63}});
  const auto file = serialize_checkpoint(m);
  EXPECT_EQ(detail::read_u64_le(file.data()) % 8, 0u);
}

TEST(Checkpoint, EmptyManifestRoundTrips) {
  const CheckpointManifest empty;
  const auto file = serialize_checkpoint(empty);
  const CheckpointManifest back = parse_checkpoint(file);
  EXPECT_TRUE(back.tensors().empty());
  EXPECT_TRUE(back.metadata().empty());
}

TEST(Checkpoint, HalfPrecisionBytesArePreserved) {
  CheckpointManifest m;
  std::vector<std::uint8_t> bytes = {0x01, 0x7c, 0xff, 0xfb, 0x00, 0x80, 0x55, 0x35};  // NaN, -max, -0, misc
  m.add({"h", DType::kF16, {4}, bytes});
  const auto back = parse_checkpoint(serialize_checkpoint(m));
  EXPECT_EQ(back.tensors()[0].data, bytes);
  EXPECT_EQ(back.tensors()[0].dtype, DType::kF16);
}

TEST(Checkpoint, DuplicateNameIsRejected) {
  CheckpointManifest m;
  m.add({"w", DType::kF32, {1}, {0, 0, 0, 0}});
  try {
    m.add({"w", DType::kF32, {1}, {0, 0, 0, 0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDuplicateName);
  }
}

TEST(Checkpoint, DuplicateKeyInHeaderIsMalformed) {
  const std::string header =
      R"({"w":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"w":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}})";
  EXPECT_EQ(code_of(container(header, 8)), Errc::kMalformedHeader);
}

TEST(Checkpoint, GetTensorReturnsExactBytes) {
  CheckpointManifest m;
  m.add({"w", DType::kBF16, {2}, {1, 2, 3, 4}});
  const auto back = parse_checkpoint(serialize_checkpoint(m));
  EXPECT_EQ(get_tensor(back, "w").data, (std::vector<std::uint8_t>{1, 2, 3, 4}));
  try {
    get_tensor(back, "missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNotFound);
  }
}

TEST(Checkpoint, UnsupportedDtype) {
  const std::string header = R"({"w":{"dtype":"I8","shape":[4],"data_offsets":[0,4]}})";
  EXPECT_EQ(code_of(container(header, 4)), Errc::kUnsupportedDtype);
}

TEST(Checkpoint, MalformedInputs) {
  EXPECT_EQ(code_of({}), Errc::kMalformedHeader);
  EXPECT_EQ(code_of({1, 2, 3}), Errc::kMalformedHeader);
  // Declared header length beyond the file.
  std::vector<std::uint8_t> big;
  detail::append_u64_le(big, 1000);
  big.push_back('{');
  EXPECT_EQ(code_of(big), Errc::kMalformedHeader);
  EXPECT_EQ(code_of(container("not json", 0)), Errc::kMalformedHeader);
  EXPECT_EQ(code_of(container("[]", 0)), Errc::kMalformedHeader);
  EXPECT_EQ(code_of(container(R"({"w":{"dtype":"F32","shape":[1]}})", 4)), Errc::kMalformedHeader);
  EXPECT_EQ(code_of(container(R"({"w":{"dtype":"F32","shape":[2],"data_offsets":[0,4]}})", 4)),
            Errc::kMalformedHeader);
  EXPECT_EQ(code_of(container(R"({"w":{"dtype":"F32","shape":[-1],"data_offsets":[0,4]}})", 4)),
            Errc::kMalformedHeader);
  EXPECT_EQ(code_of(container(R"({"w":{"dtype":"F32","shape":[1],"data_offsets":[4,0]}})", 4)),
            Errc::kMalformedHeader);
  EXPECT_EQ(code_of(container(R"({"__metadata__":{"k":3}})", 0)), Errc::kMalformedHeader);
  // Overlapping byte ranges.
  EXPECT_EQ(code_of(container(R"({"a":{"dtype":"F16","shape":[2],"data_offsets":[0,4]},)"
                              R"("b":{"dtype":"F16","shape":[2],"data_offsets":[2,6]}})",
                              6)),
            Errc::kMalformedHeader);
  // Element count overflowing 64 bits.
  EXPECT_EQ(code_of(container(R"({"w":{"dtype":"F32","shape":[4294967296,4294967296,16],"data_offsets":[0,0]}})", 0)),
            Errc::kMalformedHeader);
}

TEST(Checkpoint, DeeplyNestedHeaderFailsCleanly) {
  const std::string header = std::string(20000, '[') + std::string(20000, ']');
  EXPECT_EQ(code_of(container(header, 0)), Errc::kMalformedHeader);
}

TEST(Checkpoint, AcceptsForeignPaddingAndKeyOrder) {
  // Writers pad with trailing spaces and may list tensors out of offset order.
  std::string header =
      R"({"z":{"data_offsets":[4,8],"shape":[1],"dtype":"F32"},"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},)"
      R"("__metadata__":{"format":"pt"}})";
  header += std::string(8 - header.size() % 8, ' ');
  auto file = container(header, 8);
  const CheckpointManifest m = parse_checkpoint(file);
  ASSERT_EQ(m.tensors().size(), 2u);
  EXPECT_EQ(m.metadata().at("format"), "pt");
  EXPECT_TRUE(m.contains("a"));
  EXPECT_TRUE(m.contains("z"));
}

TEST(Checkpoint, ReservedNameIsRejected) {
  CheckpointManifest m;
  EXPECT_THROW(m.add({"__metadata__", DType::kF32, {}, {0, 0, 0, 0}}), Error);
}

TEST(Checkpoint, ByteLengthMustMatchShape) {
  CheckpointManifest m;
  try {
    m.add({"w", DType::kF32, {3}, {0, 0, 0, 0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kShapeMismatch);
  }
}

TEST(Checkpoint, FileRoundTripAndIoErrors) {
  testing::TempDir dir("ckpt");
  CheckpointManifest m;
  m.add({"w", DType::kF32, {2}, {0, 0, 128, 63, 0, 0, 0, 64}});
  write_checkpoint(m, dir / "m.safetensors");
  EXPECT_EQ(read_checkpoint(dir / "m.safetensors"), m);
  try {
    read_checkpoint(dir / "absent.safetensors");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kIoFailure);
  }
}

TEST(Checkpoint, RandomManifestsRoundTrip) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const CheckpointManifest m = testing::random_manifest(rng);
    const auto bytes = serialize_checkpoint(m);
    const CheckpointManifest back = parse_checkpoint(bytes);
    ASSERT_EQ(back, m) << "case " << i;
    ASSERT_EQ(serialize_checkpoint(back), bytes) << "case " << i;
  }
}

TEST(Checkpoint, MutatedContainersFailOnlyWithTypedErrors) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 500; ++i) {
    const auto bytes = serialize_checkpoint(testing::random_manifest(rng));
    const auto bad = testing::mutate_container(bytes, rng);
    try {
      const auto parsed = parse_checkpoint(bad);
      // A mutation that still parses must describe a consistent manifest.
      EXPECT_EQ(parse_checkpoint(serialize_checkpoint(parsed)), parsed);
    } catch (const Error& e) {
      EXPECT_TRUE(e.code() == Errc::kMalformedHeader || e.code() == Errc::kUnsupportedDtype) << errc_name(e.code());
    }
  }
}

TEST(Dtype, ConversionsAreConsistent) {
  const std::vector<float> values = {0.0f, 1.0f, -2.5f, 65504.0f, 1e-3f};
  for (DType d : {DType::kF32, DType::kF16, DType::kBF16}) {
    const auto bytes = encode_from_f32(d, values);
    EXPECT_EQ(bytes.size(), values.size() * dtype_width(d));
    const auto back = decode_to_f32(d, bytes);
    for (std::size_t i = 0; i < values.size(); ++i) EXPECT_NEAR(back[i], values[i], std::fabs(values[i]) * 1e-2 + 1e-6);
    EXPECT_EQ(parse_dtype(dtype_name(d)), d);
  }
  EXPECT_EQ(decode_to_f32(DType::kF16, std::vector<std::uint8_t>{0x00, 0x3c})[0], 1.0f);
  EXPECT_EQ(decode_to_f32(DType::kBF16, std::vector<std::uint8_t>{0x80, 0x3f})[0], 1.0f);
  EXPECT_EQ(convert_bytes(DType::kF32, DType::kF16, encode_from_f32(DType::kF32, std::vector<float>{1.0f})),
            (std::vector<std::uint8_t>{0x00, 0x3c}));
}

}  // namespace
}  // namespace graft
