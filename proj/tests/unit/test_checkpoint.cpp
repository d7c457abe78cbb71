#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "fedsg/checkpoint.hpp"
#include "fedsg/error.hpp"
#include "fedsg/federation.hpp"

namespace {

TEST(Checkpoint, SizeIsHeaderPlusPayload) {
  EXPECT_EQ(fedsg::kCheckpointHeaderBytes, 40u);
  EXPECT_EQ(fedsg::checkpoint_size(34, 64, 3), 40u + 8u * 3u * (34u + 64u));
  const auto model = fedsg::random_factor_pair(34, 64, 3, 1);
  std::ostringstream out;
  fedsg::write_checkpoint(out, model, 200);
  EXPECT_EQ(out.str().size(), fedsg::checkpoint_size(34, 64, 3));
}

TEST(Checkpoint, LayoutIsLittleEndianWithMagic) {
  const auto model = fedsg::random_factor_pair(5, 4, 2, 2);
  std::ostringstream out;
  fedsg::write_checkpoint(out, model, 7);
  const std::string bytes = out.str();
  EXPECT_EQ(bytes.substr(0, 8), "FEDSGCK1");
  const auto field = [&](std::size_t i) {
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(bytes[8 + 8 * i + static_cast<std::size_t>(b)]);
    return v;
  };
  EXPECT_EQ(field(0), 5u);
  EXPECT_EQ(field(1), 4u);
  EXPECT_EQ(field(2), 2u);
  EXPECT_EQ(field(3), 7u);
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 40, sizeof(double));
  EXPECT_EQ(first, model.u.basis()(0, 0));
  double v_first = 0.0;
  std::memcpy(&v_first, bytes.data() + 40 + 8 * 10, sizeof(double));
  EXPECT_EQ(v_first, model.v.basis()(0, 0));
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto model = fedsg::random_factor_pair(12, 9, 3, 3);
  std::stringstream buffer;
  fedsg::write_checkpoint(buffer, model, 42);
  const auto back = fedsg::read_checkpoint(buffer);
  EXPECT_EQ(back.round, 42u);
  EXPECT_TRUE(back.model.u == model.u);
  EXPECT_TRUE(back.model.v == model.v);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "fedsg_checkpoint_test.bin";
  const auto model = fedsg::random_factor_pair(6, 5, 2, 4);
  fedsg::save_checkpoint(path, model, 1);
  EXPECT_EQ(std::filesystem::file_size(path), fedsg::checkpoint_size(6, 5, 2));
  const auto back = fedsg::load_checkpoint(path);
  EXPECT_TRUE(back.model.u == model.u);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad_magic("NOTMAGIC0000000000000000000000000000000000000000");
  EXPECT_THROW(fedsg::read_checkpoint(bad_magic), fedsg::Error);

  const auto model = fedsg::random_factor_pair(6, 5, 2, 5);
  std::ostringstream out;
  fedsg::write_checkpoint(out, model, 1);
  std::stringstream truncated(out.str().substr(0, out.str().size() - 8));
  EXPECT_THROW(fedsg::read_checkpoint(truncated), fedsg::Error);

  EXPECT_THROW(fedsg::load_checkpoint("/nonexistent/fedsg/checkpoint.bin"), fedsg::Error);
}

}  // namespace
