#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "sensorlink/error.hpp"
#include "sensorlink/sim.hpp"

namespace sensorlink {

WorkloadConfig WorkloadConfig::typical() { return WorkloadConfig{}; }

WorkloadConfig WorkloadConfig::maximum() {
  WorkloadConfig c;
  c.gps_hz = 1;
  c.accel_hz = 200;
  c.gyro_hz = 200;
  c.mag_hz = 200;
  c.wifi_scan_min_s = 1;
  c.wifi_scan_max_s = 1;
  c.wifi_aps_min = 5;
  c.wifi_aps_max = 7;
  c.bt_period_s = 10;
  c.bt_devices = 10;
  c.pressure_period_s = 10;
  c.obd_hz = 8;
  return c;
}

namespace {

double round_to(double v, double step) { return std::round(v / step) * step; }

std::int16_t clamp16(double v) {
  return static_cast<std::int16_t>(std::clamp(std::round(v), -32768.0, 32767.0));
}

struct AccessPoint {
  MacAddress mac;
  std::string essid;
  double rssi;
};

// Vehicle-like trajectory: speed and heading drift smoothly.
class Trajectory {
 public:
  explicit Trajectory(std::mt19937_64& rng) : rng_(rng) {}

  GpsFix step(std::int64_t device_ts) {
    std::normal_distribution<double> dv(0.0, 0.6);
    std::normal_distribution<double> dh(0.0, 0.05);
    std::normal_distribution<double> dalt(0.0, 0.3);
    speed_ = std::clamp(speed_ + dv(rng_), 0.0, 33.0);
    heading_ += dh(rng_);
    constexpr double kMetersPerDegree = 111'320.0;
    lat_ += speed_ * std::cos(heading_) / kMetersPerDegree;
    lon_ += speed_ * std::sin(heading_) / (kMetersPerDegree * std::cos(lat_ * std::numbers::pi / 180.0));
    alt_ = std::clamp(alt_ + dalt(rng_), 0.0, 2000.0);
    std::uniform_int_distribution<int> acc(6, 20);
    return GpsFix{round_to(lat_, 1e-6), round_to(lon_, 1e-6), round_to(alt_, 0.1),
                  round_to(speed_, 0.01), acc(rng_) * 0.5, device_ts};
  }

  double speed() const noexcept { return speed_; }

 private:
  std::mt19937_64& rng_;
  double lat_ = 40.2033;
  double lon_ = -8.4103;
  double alt_ = 75.0;
  double speed_ = 12.0;
  double heading_ = 0.7;
};

MotionSamples motion_second(std::mt19937_64& rng, std::uint16_t rate, std::uint32_t second, double base_z,
                            double amplitude, double noise) {
  std::normal_distribution<double> n(0.0, noise);
  MotionSamples m;
  m.rate = rate;
  m.samples.reserve(rate);
  for (std::uint16_t i = 0; i < rate; ++i) {
    const double t = second + static_cast<double>(i) / rate;
    const double w = 2 * std::numbers::pi * 0.8 * t;
    m.samples.push_back(
        {clamp16(amplitude * std::sin(w) + n(rng)), clamp16(amplitude * 0.5 * std::cos(w) + n(rng)),
         clamp16(base_z + amplitude * 0.3 * std::sin(2 * w) + n(rng))});
  }
  return m;
}

std::uint32_t next_period(std::mt19937_64& rng, std::uint32_t lo, std::uint32_t hi) {
  return std::uniform_int_distribution<std::uint32_t>(lo, std::max(lo, hi))(rng);
}

}  // namespace

std::vector<TimedBatch> generate_session(const WorkloadConfig& c) {
  if (c.gps_hz < 0 || c.gps_hz > 1) throw Error(Errc::config_error, "gps_hz must be within [0, 1]");
  if (c.obd_hz > 999) throw Error(Errc::config_error, "obd_hz must be below 1000");
  if (c.wifi_scan_min_s > c.wifi_scan_max_s || c.wifi_aps_min > c.wifi_aps_max) {
    throw Error(Errc::config_error, "wifi min exceeds max");
  }
  if (c.wifi_scan_min_s > 0 && (c.ap_pool_size == 0 || c.wifi_aps_max > c.ap_pool_size)) {
    throw Error(Errc::config_error, "wifi_aps_max must not exceed ap_pool_size");
  }

  // Independent generators per stream so enabling one stream does not
  // change another's values.
  std::mt19937_64 gps_rng(c.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::mt19937_64 motion_rng(c.seed * 0x9E3779B97F4A7C15ULL + 2);
  std::mt19937_64 wifi_rng(c.seed * 0x9E3779B97F4A7C15ULL + 3);
  std::mt19937_64 misc_rng(c.seed * 0x9E3779B97F4A7C15ULL + 4);

  std::vector<AccessPoint> pool;
  std::discrete_distribution<std::size_t> zipf;
  if (c.ap_pool_size > 0) {
    std::vector<double> weights;
    std::normal_distribution<double> level(-72.0, 8.0);
    for (std::uint32_t k = 0; k < c.ap_pool_size; ++k) {
      MacAddress mac = MacAddress::from_integer(0x00'1a'2b'00'00'00ULL + (wifi_rng() & 0xffffffULL));
      pool.push_back({mac, "net-" + std::to_string(k + 1), std::clamp(level(wifi_rng), -95.0, -35.0)});
      weights.push_back(1.0 / std::pow(static_cast<double>(k + 1), c.zipf_exponent));
    }
    zipf = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
  }
  std::vector<MacAddress> bt_pool;
  for (std::uint32_t k = 0; k < c.bt_devices; ++k) {
    bt_pool.push_back(MacAddress::from_integer(0x5c'f3'70'00'00'00ULL + (misc_rng() & 0xffffffULL)));
  }

  Trajectory trajectory(gps_rng);
  const std::uint32_t gps_every = c.gps_hz > 0 ? static_cast<std::uint32_t>(std::lround(1.0 / c.gps_hz)) : 0;
  const std::int64_t clock_skew_ms = std::uniform_int_distribution<int>(-900, 900)(gps_rng);
  std::uint32_t next_scan = c.wifi_scan_min_s > 0 ? next_period(wifi_rng, c.wifi_scan_min_s, c.wifi_scan_max_s) : 0;
  double hpa = 1013.25;
  std::uint16_t rpm_raw = 3200;  // (A*256+B)/4 rpm

  std::vector<TimedBatch> out;
  out.reserve(c.duration_s);
  for (std::uint32_t s = 0; s < c.duration_s; ++s) {
    TimedBatch tb{s, {}};
    const std::uint32_t ts = c.start_time + s;

    if (gps_every != 0 && s % gps_every == 0) {
      const auto ms = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(0, 999)(gps_rng));
      tb.batch.append(Stream::gps,
                      Row{ts, ms, 0, trajectory.step(std::int64_t{ts} * 1000 + ms + clock_skew_ms)});
    }
    if (c.accel_hz > 0) {
      tb.batch.append(Stream::accel, Row{ts, std::nullopt, 0, motion_second(motion_rng, c.accel_hz, s, 1000, 120, 15)});
    }
    if (c.gyro_hz > 0) {
      tb.batch.append(Stream::gyro, Row{ts, std::nullopt, 0, motion_second(motion_rng, c.gyro_hz, s, 0, 40, 6)});
    }
    if (c.mag_hz > 0) {
      tb.batch.append(Stream::mag, Row{ts, std::nullopt, 0, motion_second(motion_rng, c.mag_hz, s, -420, 25, 4)});
    }
    if (next_scan != 0 && s == next_scan) {
      const auto n = next_period(wifi_rng, c.wifi_aps_min, c.wifi_aps_max);
      std::set<std::size_t> seen;
      for (int attempts = 0; seen.size() < n && attempts < 1000; ++attempts) seen.insert(zipf(wifi_rng));
      std::normal_distribution<double> fade(0.0, 3.0);
      std::uint16_t idx = 0;
      for (auto k : seen) {
        const auto& ap = pool[k];
        tb.batch.append(Stream::wifi, Row{ts, std::nullopt, idx++,
                                          WifiObservation{std::nullopt, ap.mac, ap.essid, clamp16(ap.rssi + fade(wifi_rng))}});
      }
      next_scan = s + next_period(wifi_rng, c.wifi_scan_min_s, c.wifi_scan_max_s);
    }
    if (c.bt_period_s > 0 && s % c.bt_period_s == 0) {
      std::uniform_int_distribution<int> rssi(-95, -50);
      std::uint16_t idx = 0;
      for (const auto& dev : bt_pool) {
        tb.batch.append(Stream::bt, Row{ts, std::nullopt, idx++, BtObservation{dev, static_cast<std::int16_t>(rssi(misc_rng))}});
      }
    }
    if (c.pressure_period_s > 0 && s % c.pressure_period_s == 0) {
      hpa += std::normal_distribution<double>(0.0, 0.05)(misc_rng);
      tb.batch.append(Stream::pressure, Row{ts, std::nullopt, 0, PressureSample{round_to(hpa, 0.01)}});
    }
    if (c.obd_hz > 0) {
      static constexpr std::uint16_t kPids[] = {0x0C, 0x0D, 0x05, 0x11};
      for (std::uint16_t i = 0; i < c.obd_hz; ++i) {
        const std::uint16_t pid = kPids[i % 4];
        std::uint16_t value = 0;
        switch (pid) {
          case 0x0C:
            rpm_raw = static_cast<std::uint16_t>(
                std::clamp(rpm_raw + std::uniform_int_distribution<int>(-120, 120)(misc_rng), 2800, 24000));
            value = rpm_raw;
            break;
          case 0x0D: value = static_cast<std::uint16_t>(std::lround(trajectory.speed() * 3.6)) << 8; break;
          case 0x05: value = static_cast<std::uint16_t>(40 + 90) << 8; break;
          default: value = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(20, 80)(misc_rng)) << 8;
        }
        const auto ms = static_cast<std::uint16_t>(i * 1000 / c.obd_hz);
        tb.batch.append(Stream::obd, Row{ts, ms, 0, ObdReading{pid, value}});
      }
    }
    if (c.event_period_s > 0 && s % c.event_period_s == 0) {
      tb.batch.append(Stream::events, Row{ts, std::nullopt, 0, EventRecord{"marker", "t+" + std::to_string(s)}});
    }
    out.push_back(std::move(tb));
  }
  return out;
}

std::map<Stream, std::size_t> count_rows(const std::vector<TimedBatch>& session) {
  std::map<Stream, std::size_t> counts;
  for (const auto& tb : session) {
    for (const auto& [stream, rows] : tb.batch.streams) counts[stream] += rows.size();
  }
  return counts;
}

std::size_t packed_session_bytes(const std::vector<TimedBatch>& session) {
  std::size_t bytes = 0;
  for (const auto& tb : session) {
    for (const auto& [stream, rows] : tb.batch.streams) {
      for (const auto& row : rows) bytes += packed_row_bytes(stream, row);
    }
  }
  return bytes;
}

}  // namespace sensorlink
