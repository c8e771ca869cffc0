#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "ncairfl/channel.hpp"

namespace ncairfl {
namespace {

TEST(PathLoss, HundredMetresAtTwoPointFourGigahertz) {
  EXPECT_NEAR(path_loss(100.0, 2.4e9).kappa, 9.88e-9, 0.01e-9);
}

TEST(PathLoss, DoublingDistanceQuartersGain) {
  const double a = path_loss(37.0, 2.4e9).kappa;
  const double b = path_loss(74.0, 2.4e9).kappa;
  EXPECT_NEAR(a / b, 4.0, 1e-12);
  EXPECT_THROW(path_loss(0.0, 2.4e9), DomainError);
}

TEST(PathLoss, DrawnDistancesStayInRange) {
  RngStream rng(1);
  const auto gains = draw_link_gains(1000, 2.4e9, rng, 100.0);
  for (const auto& g : gains) {
    EXPECT_GT(g.distance_m, 0.0);
    EXPECT_LE(g.distance_m, 100.0);
  }
}

TEST(SnrMin, PaperConstants) {
  const std::vector<double> powers{2e-8};
  const std::vector<LinkGain> gains{path_loss(100.0, 2.4e9)};
  const double sigma2 = dbm_to_watts(-123.0);
  EXPECT_NEAR(sigma2, 5.01e-16, 0.01e-16);
  const double snr = snr_min(powers, gains, sigma2);
  EXPECT_NEAR(snr, 0.394, 0.001);
  EXPECT_NEAR(10.0 * std::log10(snr), -4.0, 0.05);
  EXPECT_NEAR(snr_min(powers, gains, 2.0 * sigma2), snr / 2.0, 1e-15);
}

TEST(SnrMin, IdenticalDevicesGiveTheSingleValue) {
  const std::vector<double> powers(5, 1e-8);
  const std::vector<LinkGain> gains(5, path_loss(40.0, 2.4e9));
  EXPECT_EQ(snr_min(powers, gains, 1e-15), snr_min(std::vector<double>{1e-8},
                                                   std::vector<LinkGain>{path_loss(40.0, 2.4e9)}, 1e-15));
}

TEST(SelectRho, TwoDeviceExample) {
  // Payload masses 2 and 8 with kappa 1 and 4 bind both devices at rho = 1.
  const std::vector<EncodedVector> g{{Eigen::Vector2d(1.0, 1.0)}, {Eigen::Vector2d(4.0, 4.0)}};
  const std::vector<LinkGain> gains{{1.0, 1.0}, {4.0, 1.0}};
  const std::vector<double> powers{1.0, 1.0};
  const double rho = select_rho(g, gains, powers, 1.0, 2);
  EXPECT_DOUBLE_EQ(rho, 1.0);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_LE(average_power(transmit_signal(g[i], 1.0, rho, gains[i])), powers[i]);
    EXPECT_NEAR(average_power(transmit_signal(g[i], 1.0, rho, gains[i])), 1.0, 1e-15);
  }
}

TEST(SelectRho, ZeroPayloadImposesNoConstraint) {
  const std::vector<EncodedVector> g{{Eigen::Vector2d(0.0, 0.0)}, {Eigen::Vector2d(2.0, 0.0)}};
  const std::vector<LinkGain> gains{{1e-9, 1.0}, {1.0, 1.0}};
  const std::vector<double> powers{1.0, 1.0};
  EXPECT_DOUBLE_EQ(select_rho(g, gains, powers, 1.0, 2), 1.0);
  const std::vector<EncodedVector> none{{Eigen::Vector2d(0.0, 0.0)}};
  EXPECT_EQ(select_rho(none, std::vector<LinkGain>{{1.0, 1.0}}, std::vector<double>{1.0}, 1.0, 2, 123.0),
            123.0);
}

TEST(SelectRho, HalvingPowersHalvesRho) {
  RngStream rng(2);
  std::vector<EncodedVector> g;
  std::vector<LinkGain> gains;
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd v(50);
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, 1e-3);
    g.push_back({v});
    gains.push_back(path_loss(rng.uniform(1.0, 100.0), 2.4e9));
  }
  const std::vector<double> full(4, 2e-8), half(4, 1e-8);
  const double a = select_rho(g, gains, full, 0.05, 50);
  const double b = select_rho(g, gains, half, 0.05, 50);
  EXPECT_NEAR(b / a, 0.5, 1e-12);
}

TEST(SelectRho, RandomPayloadsAreAlwaysFeasibleAndOneDeviceBinds) {
  RngStream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int devices = 1 + static_cast<int>(rng.below(6));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(40));
    std::vector<EncodedVector> g;
    std::vector<LinkGain> gains;
    std::vector<double> powers;
    for (int i = 0; i < devices; ++i) {
      Eigen::VectorXd v(d);
      for (Eigen::Index j = 0; j < d; ++j) v(j) = rng.uniform() < 0.3 ? 0.0 : std::exp(rng.uniform(-20.0, 0.0));
      g.push_back({v});
      gains.push_back(path_loss(rng.uniform(0.5, 100.0), 2.4e9));
      powers.push_back(rng.uniform(1e-9, 1e-7));
    }
    const double eta = rng.uniform(1e-3, 2.0);
    const double rho = select_rho(g, gains, powers, eta, d);
    double worst = 0.0;
    for (int i = 0; i < devices; ++i) {
      const double pw = average_power(transmit_signal(g[static_cast<std::size_t>(i)], eta, rho,
                                                      gains[static_cast<std::size_t>(i)]));
      EXPECT_LE(pw, powers[static_cast<std::size_t>(i)]);
      if (g[static_cast<std::size_t>(i)].g.sum() > 0.0) worst = std::max(worst, pw / powers[static_cast<std::size_t>(i)]);
    }
    if (worst > 0.0 && rho < kDefaultRhoCap) EXPECT_NEAR(worst, 1.0, 1e-12);
  }
}

TEST(TransmitSignal, HandExample) {
  const Eigen::VectorXd x = transmit_signal({Eigen::Vector2d(4.0, 0.0)}, 1.0, 1.0, {4.0, 1.0});
  EXPECT_EQ(x(0), 1.0);
  EXPECT_EQ(x(1), 0.0);
  EXPECT_EQ(transmit_signal({Eigen::VectorXd::Zero(3)}, 1.0, 1.0, {4.0, 1.0}).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TransmitSignal, QuadruplingRhoDoublesAmplitude) {
  const EncodedVector g{Eigen::Vector3d(0.3, 1.7, 0.0)};
  const Eigen::VectorXd a = transmit_signal(g, 0.1, 2.0, {1e-8, 50.0});
  const Eigen::VectorXd b = transmit_signal(g, 0.1, 8.0, {1e-8, 50.0});
  EXPECT_LT((b - 2.0 * a).cwiseAbs().maxCoeff(), 1e-12 * b.cwiseAbs().maxCoeff());
}

TEST(TransmitSignal, NegativePayloadViolatesContract) {
  EXPECT_THROW(transmit_signal({Eigen::Vector2d(1.0, -1.0)}, 1.0, 1.0, {1.0, 1.0}), ContractViolation);
}

TEST(Superpose, NoDevicesNoNoiseGivesZero) {
  RngStream rng(4);
  const ChannelRound round = draw_channel_round(0, 5, 0.0, 1.0, FadingModel::rayleigh, rng);
  const std::vector<Eigen::VectorXd> none;
  const Eigen::VectorXcd y = superpose<Eigen::VectorXd>(none, {}, round, rng, 5);
  EXPECT_EQ(y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Superpose, UnitChannelSingleDevice) {
  RngStream rng(5);
  const EncodedVector g{Eigen::Vector3d(0.5, 0.0, 2.0)};
  const LinkGain gain{3e-9, 10.0};
  const double eta = 0.2, rho = 7.0;
  const std::vector<Eigen::VectorXd> xs{transmit_signal(g, eta, rho, gain)};
  const ChannelRound round = draw_channel_round(1, 3, 0.0, rho, FadingModel::unit, rng);
  const Eigen::VectorXcd y = superpose<Eigen::VectorXd>(xs, std::vector<LinkGain>{gain}, round, rng, 3);
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_NEAR(y(j).real(), std::sqrt(rho * g.g(j) / eta), 1e-12);
    EXPECT_EQ(y(j).imag(), 0.0);
  }
}

TEST(Superpose, TwoByTwoHandComputation) {
  RngStream rng(6);
  ChannelRound round;
  round.h.resize(2, 2);
  round.h << std::complex<double>(1.0, 2.0), std::complex<double>(0.0, -1.0),
      std::complex<double>(-0.5, 0.5), std::complex<double>(3.0, 0.0);
  round.sigma2 = 0.0;
  const std::vector<Eigen::VectorXd> xs{Eigen::Vector2d(2.0, 1.0), Eigen::Vector2d(4.0, 3.0)};
  const std::vector<LinkGain> gains{{4.0, 1.0}, {0.25, 1.0}};
  const Eigen::VectorXcd y = superpose<Eigen::VectorXd>(xs, gains, round, rng, 2);
  // y0 = (1+2i)*2*2 + (-0.5+0.5i)*0.5*4 = (4+8i) + (-1+1i)
  // y1 = (-i)*2*1 + 3*0.5*3 = 4.5 - 2i
  EXPECT_NEAR(y(0).real(), 3.0, 1e-15);
  EXPECT_NEAR(y(0).imag(), 9.0, 1e-15);
  EXPECT_NEAR(y(1).real(), 4.5, 1e-15);
  EXPECT_NEAR(y(1).imag(), -2.0, 1e-15);
}

TEST(Superpose, PathLossCancelsWhenAmplitudeUsesSameKappa) {
  const EncodedVector g{Eigen::Vector4d(0.1, 0.0, 3.0, 1.2)};
  Eigen::VectorXcd ys[2];
  const double kappas[2] = {1e-9, 5e-6};
  for (int k = 0; k < 2; ++k) {
    RngStream rng(7);
    const LinkGain gain{kappas[k], 1.0};
    const ChannelRound round = draw_channel_round(1, 4, 1e-3, 2.0, FadingModel::rayleigh, rng);
    const std::vector<Eigen::VectorXd> xs{transmit_signal(g, 0.5, 2.0, gain)};
    ys[k] = superpose<Eigen::VectorXd>(xs, std::vector<LinkGain>{gain}, round, rng, 4);
  }
  EXPECT_LT((ys[0] - ys[1]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SquareLaw, HandExample) {
  Eigen::VectorXcd y(2);
  y << std::complex<double>(2.0, 0.0), std::complex<double>(0.0, 0.0);
  const auto stats = square_law(y, 1.0, 2.0);
  EXPECT_EQ(stats.r(0), 1.5);
  EXPECT_EQ(square_law(Eigen::VectorXcd::Zero(3), 0.0, 1.0).r.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fading, UnitVarianceOverMillionDraws) {
  RngStream rng(8);
  const ChannelRound round = draw_channel_round(10, 100000, 0.0, 1.0, FadingModel::rayleigh, rng);
  double sum = 0.0;
  std::complex<double> mean = 0.0;
  for (Eigen::Index k = 0; k < round.h.size(); ++k) {
    sum += std::norm(round.h.data()[k]);
    mean += round.h.data()[k];
  }
  const double n = static_cast<double>(round.h.size());
  EXPECT_NEAR(sum / n, 1.0, 0.01);
  EXPECT_LT(std::abs(mean / n), 0.005);
}

TEST(Detector, MeanStatisticMatchesPayloadSum) {
  // 2 devices, 4 subcarriers, 2e5 fading draws at moderate SNR.
  const double eta = 0.5, sigma2 = 0.05;
  const std::vector<EncodedVector> g{{Eigen::Vector4d(0.2, 0.0, 1.0, 0.4)}, {Eigen::Vector4d(0.1, 0.3, 0.0, 0.4)}};
  const std::vector<LinkGain> gains{{0.5, 1.0}, {2.0, 1.0}};
  const std::vector<double> powers{1.0, 1.0};
  const double rho = select_rho(g, gains, powers, eta, 4);
  std::vector<Eigen::VectorXd> xs;
  for (std::size_t i = 0; i < 2; ++i) xs.push_back(transmit_signal(g[i], eta, rho, gains[i]));
  const NonCoherentUplink uplink(FadingModel::rayleigh, sigma2);
  RngStream rng(9);
  const int draws = 200000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4), sum_sq = Eigen::VectorXd::Zero(4);
  for (int k = 0; k < draws; ++k) {
    const Eigen::VectorXd r = square_law(uplink.transmit(xs, gains, rho, 4, rng), sigma2, rho).r;
    sum += r;
    sum_sq += r.cwiseProduct(r);
  }
  const Eigen::VectorXd expect = (g[0].g + g[1].g) / eta;
  for (Eigen::Index j = 0; j < 4; ++j) {
    const double mean = sum(j) / draws;
    const double var = sum_sq(j) / draws - mean * mean;
    EXPECT_NEAR(mean, expect(j), 4.0 * std::sqrt(var / draws)) << "subcarrier " << j;
  }
}

}  // namespace
}  // namespace ncairfl
