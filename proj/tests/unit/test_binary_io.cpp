#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "lensforge/binary_io.hpp"
#include "oracles.hpp"

using namespace lensforge;

TEST(Crc32, StandardCheckValue) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}), 0xCBF43926u);
  EXPECT_EQ(crc32({}), 0u);
}

TEST(ByteIo, LittleEndianLayout) {
  ByteWriter w;
  w.u32(0x01020304u);
  w.f32(1.0f);
  w.str("ab");
  const auto& b = w.buffer();
  const std::vector<std::uint8_t> expected = {4, 3, 2, 1, 0x00, 0x00, 0x80, 0x3f, 2, 0, 0, 0, 'a', 'b'};
  EXPECT_EQ(b, expected);
}

TEST(ByteIo, RoundTripAndBoundsChecks) {
  ByteWriter w;
  w.u32(7);
  w.f32(-2.5f);
  w.f32(std::numeric_limits<float>::infinity());
  w.str("MOS-S1");
  const auto bytes = w.take();
  ByteReader r(bytes);
  EXPECT_EQ(r.u32(), 7u);
  EXPECT_EQ(r.f32(), -2.5f);
  EXPECT_TRUE(std::isinf(r.f32()));
  EXPECT_EQ(r.str(), "MOS-S1");
  EXPECT_EQ(r.remaining(), 0u);
  try {
    r.u32();
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::Truncated);
  }
}

TEST(ByteIo, OversizedStringLengthIsRejected) {
  ByteWriter w;
  w.u32(1u << 30);
  const auto bytes = w.take();
  ByteReader r(bytes);
  EXPECT_THROW(r.str(), FormatError);
}

TEST(CrcTrailer, DetectsCorruptionAndShortInput) {
  ByteWriter w;
  for (int i = 0; i < 64; ++i) w.u32(static_cast<std::uint32_t>(i * 2654435761u));
  w.finish_with_crc();
  auto bytes = w.take();
  EXPECT_EQ(verify_crc_trailer(bytes, 8).size(), bytes.size() - 4);
  bytes[17] ^= 1;
  try {
    verify_crc_trailer(bytes, 8);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::Checksum);
  }
  try {
    verify_crc_trailer(std::span(bytes).first(6), 8);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::Truncated);
  }
}

TEST(FileBytes, WriteReadAndMissingFile) {
  lensforge::testing::TempDir dir;
  const std::vector<std::uint8_t> data = {0, 1, 2, 255};
  write_file_bytes(dir / "x.bin", data);
  EXPECT_EQ(read_file_bytes(dir / "x.bin"), data);
  EXPECT_THROW(read_file_bytes(dir / "missing.bin"), FormatError);
}
