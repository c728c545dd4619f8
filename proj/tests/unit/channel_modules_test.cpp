#include <gtest/gtest.h>

#include <cmath>

#include "cafe/channel_modules.hpp"
#include "cafe/errors.hpp"

namespace cafe {
namespace {

TEST(Partition, FiveTwelveIntoSeven) {
  const ChannelPartition p = split_channels(512, 7);
  ASSERT_EQ(p.classes(), 7u);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(p.piece_sizes()[j], 73u);
  EXPECT_EQ(p.piece_sizes()[6], 74u);
  EXPECT_EQ(p.piece_offsets()[6], 438u);
  EXPECT_EQ(p.c_norm(), 73u);
  for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(p.drop_count(j), 10u);
}

TEST(Partition, RemainderGoesToTheLastPiece) {
  const ChannelPartition p = split_channels(20, 7);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(p.piece_sizes()[j], 2u);
  EXPECT_EQ(p.piece_sizes()[6], 8u);
  EXPECT_EQ(split_channels(7, 7).piece_sizes()[3], 1u);
}

TEST(Partition, InvalidConfigurationsThrow) {
  EXPECT_THROW(split_channels(6, 7), ArgumentError);
  EXPECT_THROW(split_channels(14, 0), ArgumentError);
  EXPECT_THROW(split_channels(14, 7, Rational{1, 1}), ArgumentError);
  EXPECT_NO_THROW(split_channels(21, 7, Rational{1, 3}));
}

TEST(Rational, Parse) {
  EXPECT_EQ(Rational::parse("10/73"), (Rational{10, 73}));
  EXPECT_EQ(Rational::parse("20/146"), (Rational{10, 73}));
  EXPECT_EQ(Rational::parse("0.25"), (Rational{1, 4}));
  EXPECT_EQ(Rational::parse("0"), (Rational{0, 1}));
  EXPECT_THROW(Rational::parse("x"), ArgumentError);
  EXPECT_THROW(Rational::parse("1/0"), ArgumentError);
}

TEST(DropMask, ExactlyTenZerosPerPiece) {
  const ChannelPartition p = split_channels(512, 7);
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const DropMask m = sample_drop_mask(p, rng);
    ASSERT_EQ(m.keep.size(), 512u);
    for (std::size_t j = 0; j < 7; ++j) ASSERT_EQ(m.zeros_in(p, j), 10u);
  }
}

TEST(DropMask, ChannelsAreDroppedUniformly) {
  // Each channel of a 73-wide piece is dropped with probability 10/73.
  const ChannelPartition p = split_channels(512, 7);
  Rng rng(5);
  const int trials = 20000;
  std::vector<int> dropped(512, 0);
  for (int t = 0; t < trials; ++t) {
    const DropMask m = sample_drop_mask(p, rng);
    for (std::size_t c = 0; c < 512; ++c) dropped[c] += m.keep[c] == 0;
  }
  for (std::size_t c = 0; c < 512; ++c) {
    const double size = c >= 438 ? 74.0 : 73.0;
    const double q = 10.0 / size;
    const double mean = trials * q;
    const double sigma = std::sqrt(trials * q * (1.0 - q));
    // 5 sigma per channel keeps the family-wise false alarm rate negligible over 512 channels.
    EXPECT_NEAR(dropped[c], mean, 5.0 * sigma) << "channel " << c;
  }
}

TEST(DropMask, ZeroRateKeepsEverything) {
  const ChannelPartition p = split_channels(14, 7, Rational{0, 1});
  Rng rng(1);
  const DropMask m = sample_drop_mask(p, rng);
  for (auto k : m.keep) EXPECT_EQ(k, 1);
}

TEST(SepLogits, MaxOverSurvivorsWithLowestIndexTies) {
  const ChannelPartition p = split_channels(4, 2, Rational{0, 1});
  MatrixD f(1, 4);
  f(0, 0) = 0.2;
  f(0, 1) = 0.9;
  f(0, 2) = 0.5;
  f(0, 3) = 0.5;
  DropMask drop{{1, 0, 1, 1}};
  const PiecewiseMax r = sep_logits(f, drop, p);
  EXPECT_EQ(r.values(0, 0), 0.2);
  EXPECT_EQ(r.winner(0, 0), 0u);
  EXPECT_EQ(r.values(0, 1), 0.5);
  EXPECT_EQ(r.winner(0, 1), 2u);
  // A dropped channel never wins, even when every survivor is negative.
  f(0, 0) = -0.3;
  EXPECT_EQ(sep_logits(f, drop, p).values(0, 0), -0.3);
}

TEST(SepLoss, UniformLogitsGiveLogSeven) {
  const SoftmaxXent r = sep_loss(MatrixD(2, 7, 0.4), std::vector<std::uint8_t>{2, 5});
  EXPECT_NEAR(r.loss, 1.945910, 1e-6);
}

TEST(DivLoss, ZeroFeaturesGiveExactlyOne) {
  const ChannelPartition p = split_channels(512, 7);
  EXPECT_EQ(div_loss(MatrixD(3, 512, 0.0), p).loss, 1.0);
}

TEST(DivLoss, AllMaximaSeventyThree) {
  // Sum of maxima = 7 * 73 per row; normalized by c = 73 gives 7, so 1 - 7 = -6.
  const ChannelPartition p = split_channels(512, 7);
  EXPECT_NEAR(div_loss(MatrixD(2, 512, 73.0), p).loss, -6.0, 1e-12);
}

TEST(DivLoss, IgnoresTheDropMask) {
  const ChannelPartition p = split_channels(14, 7);
  MatrixD f(1, 14);
  for (std::size_t c = 0; c < 14; ++c) f(0, c) = static_cast<double>(c) / 14.0;
  const DiverseLoss d = div_loss(f, p);
  double s = 0.0;
  for (std::size_t j = 0; j < 7; ++j) s += f(0, 2 * j + 1);
  EXPECT_NEAR(d.loss, 1.0 - s / 2.0, 1e-15);
}

TEST(BackwardChannel, RoutesToWinnersOnly) {
  const ChannelPartition p = split_channels(4, 2, Rational{0, 1});
  MatrixD f(1, 4);
  f(0, 1) = 1.0;
  f(0, 2) = 2.0;
  const DiverseLoss d = div_loss(f, p);
  ChannelUpstream up;
  up.div = &d.maxima;
  up.div_weight = 5.0;
  const MatrixD g = backward_channel(p, 1, up);
  EXPECT_EQ(g(0, 0), 0.0);
  EXPECT_EQ(g(0, 1), -2.5);
  EXPECT_EQ(g(0, 2), -2.5);
  EXPECT_EQ(g(0, 3), 0.0);
}

TEST(BackwardChannel, MismatchedCacheIsAContractViolation) {
  const ChannelPartition p = split_channels(4, 2);
  const DiverseLoss d = div_loss(MatrixD(2, 4), p);
  ChannelUpstream up;
  up.div = &d.maxima;
  up.div_weight = 1.0;
  EXPECT_THROW(backward_channel(p, 3, up), ContractViolation);
  EXPECT_THROW(backward_channel(split_channels(6, 2), 2, up), ContractViolation);
}

}  // namespace
}  // namespace cafe
