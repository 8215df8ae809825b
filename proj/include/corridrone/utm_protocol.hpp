#pragma once

// Airspace negotiation between the ground control side and a (mock) UTM
// authority: messages, the authority's volume registry, the client session
// with retries, and the negotiation loop.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "corridrone/geometry.hpp"
#include "corridrone/io.hpp"

namespace corridrone::utm {

using geometry::CorridorTube;
using geometry::NoFlyZone;
using geometry::TimeWindow;

struct AirspaceVolume {
  CorridorTube tube;
  TimeWindow window;
};

// Space AND time: interiors of the windows overlap and the tubes come closer
// than the sum of their radii (exact segment-to-segment distance).
bool volumes_intersect(const AirspaceVolume& a, const AirspaceVolume& b);

enum class AllocationState { Proposed, Costed, Approved, Active, Completed, Released, Rejected };

struct AllocationRecord {
  std::string allocation_id;
  AirspaceVolume volume;
  AllocationState state = AllocationState::Proposed;
  double cost = 0.0;
  int negotiation_round = 0;
  bool priority = false;
};

// ---- messages ----

struct InfoRequest {
  AirspaceVolume region;
};
struct AllocatedVolume {
  std::string allocation_id;
  AirspaceVolume volume;
};
struct InfoResponse {
  std::vector<NoFlyZone> noflyzones;
  std::vector<AllocatedVolume> allocated_volumes;
};
struct Propose {
  AirspaceVolume volume;
  bool priority = false;  // metadata only; cost is unaffected
  int round = 1;
};
struct CostQuote {
  std::string allocation_id;
  double cost = 0.0;
  std::vector<std::string> conflicts;  // empty: Acceptable
  bool acceptable() const { return conflicts.empty(); }
};
struct Approve {
  std::string allocation_id;
};
struct Activate {
  std::string allocation_id;
};
struct Complete {
  std::string allocation_id;
};
struct Release {
  std::string allocation_id;
};
struct Ack {
  std::string allocation_id;
  AllocationState state = AllocationState::Approved;
};
struct Reject {
  std::string code;  // Errc name
  std::vector<std::string> reasons;
};

using Message = std::variant<Ack, InfoRequest, InfoResponse, Propose, CostQuote, Approve,
                             Activate, Complete, Release, Reject>;

struct Envelope {
  std::string session;
  std::uint64_t seq = 0;
  Message body;
};

std::string message_type(const Message& m);
std::string encode(const Envelope& e);  // JSON text
Envelope decode(const std::string& text);

// ---- authority ----

struct CostConfig {
  double c0 = 100.0;
  double alpha = 1e-6;   // per m^3 s
  double beta = 10.0;    // per nearby allocation
  double buffer = 100.0; // m, clearance counted as "nearby"
  double resolution = geometry::kDefaultResolution;  // no-fly sampling
};

double proposal_cost(const AirspaceVolume& v, int nearby, const CostConfig& cfg);

class UtmServer {
 public:
  explicit UtmServer(CostConfig cfg = {}, std::vector<NoFlyZone> zones = {});

  // Processes one message. Protocol errors come back as Reject; the session
  // rule is seq == last + 1, a repeat of the last seq gets the cached reply.
  Envelope handle(const Envelope& msg);

  std::vector<AllocationRecord> allocations() const;
  std::vector<NoFlyZone> zones() const;
  void add_zone(NoFlyZone zone);

  // Registry file: {"version", "noflyzones", "allocations"}.
  std::string registry_json() const;
  void load_registry_json(const std::string& text);
  void save(const std::string& path) const;
  void load(const std::string& path);

  // Test hook: called after every mutation with the registry lock held.
  void set_mutation_observer(std::function<void(const std::vector<AllocationRecord>&)> f);

 private:
  struct Session {
    std::uint64_t last_seq = 0;
    std::optional<Envelope> last_reply;
  };

  Message dispatch(const Message& m);
  std::vector<std::string> conflicts_of(const AirspaceVolume& v,
                                        const std::string& ignore_id) const;
  int nearby_count(const AirspaceVolume& v) const;
  std::string next_id();
  void notify();

  mutable std::mutex mu_;
  CostConfig cfg_;
  std::vector<NoFlyZone> zones_;
  std::map<std::string, AllocationRecord> registry_;
  std::map<std::string, AllocationRecord> quotes_;
  std::map<std::string, Session> sessions_;
  std::uint64_t id_counter_ = 0;
  std::function<void(const std::vector<AllocationRecord>&)> observer_;
};

// ---- transports ----

class Transport {
 public:
  virtual ~Transport() = default;
  // Throws Error(TransportFailure) when the exchange did not complete.
  virtual Envelope exchange(const Envelope& msg) = 0;
};

class InProcessTransport : public Transport {
 public:
  explicit InProcessTransport(UtmServer& server) : server_(server) {}
  Envelope exchange(const Envelope& msg) override;
  // Drops the next n exchanges; with `after_delivery` the server still sees
  // the message and only the reply is lost.
  void drop_next(int n, bool after_delivery = false) {
    drops_ = n;
    drop_after_ = after_delivery;
  }

 private:
  UtmServer& server_;
  int drops_ = 0;
  bool drop_after_ = false;
};

// Length-prefixed frames: 4-byte big-endian byte count, then the JSON text.
class TcpTransport : public Transport {
 public:
  TcpTransport(std::string host, int port, int timeout_ms = 5000);
  ~TcpTransport() override;
  Envelope exchange(const Envelope& msg) override;

 private:
  void connect_socket();
  void close_socket();
  std::string host_;
  int port_;
  int timeout_ms_;
  int fd_ = -1;
};

class TcpServer {
 public:
  // port 0 picks a free port.
  TcpServer(UtmServer& server, int port, std::string bind_address = "127.0.0.1");
  ~TcpServer();
  int port() const { return port_; }
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

 private:
  void accept_loop();
  void serve_connection(int fd);

  UtmServer& server_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic_bool stopping_{false};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<std::thread> workers_;
  std::vector<int> conn_fds_;
};

void write_frame(int fd, const std::string& payload);
std::optional<std::string> read_frame(int fd);  // nullopt on clean EOF

// ---- client ----

class UtmClient {
 public:
  UtmClient(Transport& transport, std::string session, int retries = 3);

  // Sends with the next sequence number, retrying the same seq on transport
  // failure. Reject replies are returned, not thrown.
  Message send(Message body);
  std::uint64_t last_seq() const { return seq_; }

 private:
  Transport& transport_;
  std::string session_;
  int retries_;
  std::uint64_t seq_ = 0;
};

struct AdjustmentPolicy {
  double time_shift = 300.0;     // s
  double altitude_shift = 50.0;  // m
  double radius_shrink = 2.0;    // m per round
  double min_radius = 5.0;       // m
};

struct RoundLog {
  int round = 0;
  AirspaceVolume proposed;
  double cost = 0.0;
  std::vector<std::string> conflicts;
  std::string adjustment;  // what the next round changes; empty when approved
};

struct NegotiationResult {
  std::optional<AllocationRecord> record;  // set on approval
  std::vector<RoundLog> history;
  bool approved() const { return record.has_value(); }
};

AirspaceVolume shift_time(const AirspaceVolume& v, double dt);
AirspaceVolume shift_altitude(const AirspaceVolume& v, double dh);
AirspaceVolume with_radius(const AirspaceVolume& v, double radius);

// Bounded loop of InfoRequest -> Propose -> (Approve | adjust). Each round
// tries the adjustments in the fixed order time, altitude, radius and takes
// the first one that clears everything the authority reported; when none
// does, all three are applied together.
NegotiationResult negotiate(UtmClient& client, const AirspaceVolume& volume,
                            const AdjustmentPolicy& adjust, int max_rounds,
                            bool priority = false);

// Simple request helpers that turn Reject into Error.
Ack activate(UtmClient& client, const std::string& allocation_id);
Ack complete(UtmClient& client, const std::string& allocation_id);
Ack release(UtmClient& client, const std::string& allocation_id);

io::ordered_json to_json(const AirspaceVolume& v);
AirspaceVolume volume_from(const io::json& j, const std::string& field);
io::ordered_json to_json(const AllocationRecord& r);
AllocationRecord record_from(const io::json& j, const std::string& field);

std::string to_string(AllocationState s);
AllocationState allocation_state_from(const std::string& s);

}  // namespace corridrone::utm
