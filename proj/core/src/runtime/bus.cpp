#include "swarmloc/runtime/bus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include <json.hpp>

#include "swarmloc/error.hpp"

namespace swarmloc::runtime {

namespace {

constexpr std::size_t kPoseBytes = 7 * sizeof(double);
constexpr std::size_t kHeaderBytes = 3 * sizeof(std::int32_t);

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw ParseError(0, "bus message truncated");
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

void put_pose(std::vector<std::uint8_t>& out, const Pose& p) {
  for (double v : {p.q().w(), p.q().x(), p.q().y(), p.q().z(), p.t().x(), p.t().y(), p.t().z()}) put(out, v);
}

Pose get_pose(const std::vector<std::uint8_t>& in, std::size_t& at) {
  double v[7];
  for (double& x : v) x = get<double>(in, at);
  return Pose(Quat(v[0], v[1], v[2], v[3]), Vec3(v[4], v[5], v[6]));
}

nlohmann::ordered_json pose_json(const Pose& p) {
  return {p.q().w(), p.q().x(), p.q().y(), p.q().z(), p.t().x(), p.t().y(), p.t().z()};
}

}  // namespace

std::vector<std::uint8_t> BusMessage::encode() const {
  std::vector<std::uint8_t> out;
  out.reserve(byte_size());
  put<std::int32_t>(out, sender);
  put<std::int32_t>(out, frame);
  put_pose(out, payload.pvo);
  put<std::int32_t>(out, static_cast<std::int32_t>(payload.poses.size()));
  for (const Pose& p : payload.poses) put_pose(out, p);
  return out;
}

BusMessage BusMessage::decode(const std::vector<std::uint8_t>& bytes) {
  std::size_t at = 0;
  BusMessage m;
  m.sender = get<std::int32_t>(bytes, at);
  m.frame = get<std::int32_t>(bytes, at);
  m.payload.pvo = get_pose(bytes, at);
  const auto count = get<std::int32_t>(bytes, at);
  if (count < 0) throw ParseError(0, "bus message: negative pose count");
  for (std::int32_t k = 0; k < count; ++k) m.payload.poses.push_back(get_pose(bytes, at));
  if (at != bytes.size()) throw ParseError(0, "bus message: trailing bytes");
  return m;
}

std::size_t BusMessage::byte_size() const { return kHeaderBytes + kPoseBytes * (1 + payload.poses.size()); }

std::string BusMessage::to_json() const {
  nlohmann::ordered_json poses = nlohmann::ordered_json::array();
  for (const Pose& p : payload.poses) poses.push_back(pose_json(p));
  nlohmann::ordered_json j;
  j["sender"] = sender;
  j["frame"] = frame;
  j["payload"] = {{"pvo", pose_json(payload.pvo)}, {"poses", poses}};
  return j.dump();
}

void BusConfig::validate() const {
  if (latency < 0) throw ConfigError("bus: latency must be >= 0");
  if (!(drop >= 0.0 && drop <= 1.0)) throw ConfigError("bus: drop must be in [0, 1]");
}

Bus::Bus(int n_robots, BusConfig config) : n_(n_robots), config_(config) {
  if (n_robots < 1) throw ConfigError("bus: needs at least one robot");
  config_.validate();
}

void Bus::send(BusMessage m) {
  if (m.sender < 0 || m.sender >= n_) throw ShapeError("bus: sender out of range");
  queue_.push_back(std::move(m));
  ++sent_;
}

bool Bus::dropped(const BusMessage& m, int receiver) const {
  if (config_.drop <= 0.0) return false;
  if (config_.drop >= 1.0) return true;
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(m.frame), static_cast<std::uint32_t>(m.sender),
                    static_cast<std::uint32_t>(receiver)};
  std::mt19937_64 rng(seq);
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return u < config_.drop;
}

std::vector<BusMessage> Bus::deliver(int receiver, int frame) const {
  std::vector<BusMessage> out;
  for (const BusMessage& m : queue_) {
    if (m.sender == receiver || m.frame + config_.latency != frame) continue;
    if (!dropped(m, receiver)) out.push_back(m);
  }
  std::sort(out.begin(), out.end(), [](const BusMessage& a, const BusMessage& b) {
    return a.sender != b.sender ? a.sender < b.sender : a.frame < b.frame;
  });
  return out;
}

void Bus::prune(int frame) {
  std::erase_if(queue_, [&](const BusMessage& m) { return m.frame + config_.latency < frame; });
}

}  // namespace swarmloc::runtime
