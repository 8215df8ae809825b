#include "corridrone/utm_protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "corridrone/error.hpp"

namespace corridrone::utm {

using io::json;
using io::ordered_json;

bool volumes_intersect(const AirspaceVolume& a, const AirspaceVolume& b) {
  if (!a.window.overlaps(b.window)) return false;
  const double d = geometry::polyline_distance(a.tube.centerline(), b.tube.centerline());
  return d < a.tube.outer_radius() + b.tube.outer_radius();
}

double proposal_cost(const AirspaceVolume& v, int nearby, const CostConfig& cfg) {
  const double r = v.tube.outer_radius();
  const double space = std::numbers::pi * r * r * v.tube.centerline().total_length();
  return cfg.c0 + cfg.alpha * space * v.window.duration() + cfg.beta * nearby;
}

// ---- JSON forms ----

std::string to_string(AllocationState s) {
  switch (s) {
    case AllocationState::Proposed: return "Proposed";
    case AllocationState::Costed: return "Costed";
    case AllocationState::Approved: return "Approved";
    case AllocationState::Active: return "Active";
    case AllocationState::Completed: return "Completed";
    case AllocationState::Released: return "Released";
    case AllocationState::Rejected: return "Rejected";
  }
  return "?";
}

AllocationState allocation_state_from(const std::string& s) {
  for (auto st : {AllocationState::Proposed, AllocationState::Costed, AllocationState::Approved,
                  AllocationState::Active, AllocationState::Completed, AllocationState::Released,
                  AllocationState::Rejected}) {
    if (to_string(st) == s) return st;
  }
  fail(Errc::Parse, "unknown allocation state " + s);
}

ordered_json to_json(const AirspaceVolume& v) {
  ordered_json j;
  j["tube"] = io::to_json(v.tube);
  j["window"] = io::to_json(v.window);
  return j;
}

AirspaceVolume volume_from(const json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("tube") || !j.contains("window"))
    fail(Errc::Parse, field + ": expected {tube, window}", {field});
  return {io::tube_from(j.at("tube"), field + ".tube"),
          io::window_from(j.at("window"), field + ".window")};
}

ordered_json to_json(const AllocationRecord& r) {
  ordered_json j;
  j["allocation_id"] = r.allocation_id;
  j["state"] = to_string(r.state);
  j["cost"] = r.cost;
  j["negotiation_round"] = r.negotiation_round;
  j["priority"] = r.priority;
  j["volume"] = to_json(r.volume);
  return j;
}

AllocationRecord record_from(const json& j, const std::string& field) {
  try {
    return {j.at("allocation_id").get<std::string>(),
            volume_from(j.at("volume"), field + ".volume"),
            allocation_state_from(j.at("state").get<std::string>()),
            j.at("cost").get<double>(),
            j.at("negotiation_round").get<int>(),
            j.value("priority", false)};
  } catch (const json::exception& e) {
    fail(Errc::Parse, field + ": " + e.what(), {field});
  }
}

std::string message_type(const Message& m) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, InfoRequest>) return "InfoRequest";
        else if constexpr (std::is_same_v<T, InfoResponse>) return "InfoResponse";
        else if constexpr (std::is_same_v<T, Propose>) return "Propose";
        else if constexpr (std::is_same_v<T, CostQuote>) return "CostQuote";
        else if constexpr (std::is_same_v<T, Approve>) return "Approve";
        else if constexpr (std::is_same_v<T, Activate>) return "Activate";
        else if constexpr (std::is_same_v<T, Complete>) return "Complete";
        else if constexpr (std::is_same_v<T, Release>) return "Release";
        else if constexpr (std::is_same_v<T, Ack>) return "Ack";
        else return "Reject";
      },
      m);
}

std::string encode(const Envelope& e) {
  ordered_json j;
  j["session"] = e.session;
  j["seq"] = e.seq;
  j["type"] = message_type(e.body);
  ordered_json body = ordered_json::object();
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, InfoRequest>) {
          body["region"] = to_json(v.region);
        } else if constexpr (std::is_same_v<T, InfoResponse>) {
          body["noflyzones"] = ordered_json::array();
          for (const auto& z : v.noflyzones) body["noflyzones"].push_back(io::to_json(z));
          body["allocated_volumes"] = ordered_json::array();
          for (const auto& a : v.allocated_volumes) {
            ordered_json aj;
            aj["allocation_id"] = a.allocation_id;
            aj["volume"] = to_json(a.volume);
            body["allocated_volumes"].push_back(std::move(aj));
          }
        } else if constexpr (std::is_same_v<T, Propose>) {
          body["volume"] = to_json(v.volume);
          body["priority"] = v.priority;
          body["round"] = v.round;
        } else if constexpr (std::is_same_v<T, CostQuote>) {
          body["allocation_id"] = v.allocation_id;
          body["cost"] = v.cost;
          body["verdict"] = v.acceptable() ? "Acceptable" : "Conflicts";
          body["conflicts"] = v.conflicts;
        } else if constexpr (std::is_same_v<T, Ack>) {
          body["allocation_id"] = v.allocation_id;
          body["state"] = to_string(v.state);
        } else if constexpr (std::is_same_v<T, Reject>) {
          body["code"] = v.code;
          body["reasons"] = v.reasons;
        } else {
          body["allocation_id"] = v.allocation_id;
        }
      },
      e.body);
  j["body"] = std::move(body);
  return j.dump();
}

Envelope decode(const std::string& text) {
  const json j = io::parse_text(text, "utm message");
  try {
    Envelope e;
    e.session = j.at("session").get<std::string>();
    e.seq = j.at("seq").get<std::uint64_t>();
    const auto type = j.at("type").get<std::string>();
    const json& b = j.at("body");
    if (type == "InfoRequest") {
      e.body = InfoRequest{volume_from(b.at("region"), "body.region")};
    } else if (type == "InfoResponse") {
      InfoResponse r;
      r.noflyzones = io::zones_from(b.at("noflyzones"), "body.noflyzones");
      for (const auto& a : b.at("allocated_volumes")) {
        r.allocated_volumes.push_back(
            {a.at("allocation_id").get<std::string>(), volume_from(a.at("volume"), "volume")});
      }
      e.body = std::move(r);
    } else if (type == "Propose") {
      e.body = Propose{volume_from(b.at("volume"), "body.volume"), b.value("priority", false),
                       b.value("round", 1)};
    } else if (type == "CostQuote") {
      e.body = CostQuote{b.at("allocation_id").get<std::string>(), b.at("cost").get<double>(),
                         b.at("conflicts").get<std::vector<std::string>>()};
    } else if (type == "Approve") {
      e.body = Approve{b.at("allocation_id").get<std::string>()};
    } else if (type == "Activate") {
      e.body = Activate{b.at("allocation_id").get<std::string>()};
    } else if (type == "Complete") {
      e.body = Complete{b.at("allocation_id").get<std::string>()};
    } else if (type == "Release") {
      e.body = Release{b.at("allocation_id").get<std::string>()};
    } else if (type == "Ack") {
      e.body = Ack{b.at("allocation_id").get<std::string>(),
                   allocation_state_from(b.at("state").get<std::string>())};
    } else if (type == "Reject") {
      e.body = Reject{b.at("code").get<std::string>(),
                      b.at("reasons").get<std::vector<std::string>>()};
    } else {
      fail(Errc::Parse, "unknown message type " + type);
    }
    return e;
  } catch (const json::exception& ex) {
    fail(Errc::Parse, std::string("malformed utm message: ") + ex.what());
  }
}

// ---- authority ----

UtmServer::UtmServer(CostConfig cfg, std::vector<NoFlyZone> zones)
    : cfg_(cfg), zones_(std::move(zones)) {
  for (const auto& z : zones_) z.validate();
}

namespace {

Reject reject(Errc code, std::string reason) {
  return Reject{std::string(to_string(code)), {std::move(reason)}};
}

bool blocking(AllocationState s) {
  return s == AllocationState::Approved || s == AllocationState::Active;
}

}  // namespace

std::string UtmServer::next_id() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "A%06llu", static_cast<unsigned long long>(++id_counter_));
  return buf;
}

std::vector<std::string> UtmServer::conflicts_of(const AirspaceVolume& v,
                                                 const std::string& ignore_id) const {
  std::vector<std::string> out;
  for (const auto& [id, rec] : registry_) {
    if (id == ignore_id || !blocking(rec.state)) continue;
    if (volumes_intersect(v, rec.volume)) out.push_back(id);
  }
  for (const auto& z : zones_) {
    if (geometry::intersects_nofly(v.tube, z, v.window, cfg_.resolution)) out.push_back(z.id);
  }
  return out;
}

int UtmServer::nearby_count(const AirspaceVolume& v) const {
  int n = 0;
  for (const auto& [id, rec] : registry_) {
    if (!blocking(rec.state) || !v.window.overlaps(rec.volume.window)) continue;
    const double clearance =
        geometry::polyline_distance(v.tube.centerline(), rec.volume.tube.centerline()) -
        v.tube.outer_radius() - rec.volume.tube.outer_radius();
    if (clearance <= cfg_.buffer) ++n;
  }
  return n;
}

void UtmServer::notify() {
  if (!observer_) return;
  std::vector<AllocationRecord> all;
  for (const auto& [id, r] : registry_) all.push_back(r);
  observer_(all);
}

Message UtmServer::dispatch(const Message& m) {
  if (const auto* info = std::get_if<InfoRequest>(&m)) {
    InfoResponse r;
    for (const auto& z : zones_) {
      if (geometry::intersects_nofly(info->region.tube, z, info->region.window, cfg_.resolution))
        r.noflyzones.push_back(z);
    }
    for (const auto& [id, rec] : registry_) {
      if (blocking(rec.state) && volumes_intersect(info->region, rec.volume))
        r.allocated_volumes.push_back({id, rec.volume});
    }
    return r;
  }
  if (const auto* p = std::get_if<Propose>(&m)) {
    AllocationRecord rec{next_id(), p->volume, AllocationState::Costed, 0.0, p->round,
                         p->priority};
    CostQuote q;
    q.allocation_id = rec.allocation_id;
    q.conflicts = conflicts_of(p->volume, "");
    q.cost = proposal_cost(p->volume, nearby_count(p->volume), cfg_);
    rec.cost = q.cost;
    if (!q.acceptable()) rec.state = AllocationState::Rejected;
    quotes_.emplace(rec.allocation_id, std::move(rec));
    return q;
  }
  if (const auto* a = std::get_if<Approve>(&m)) {
    auto it = quotes_.find(a->allocation_id);
    if (it == quotes_.end() || it->second.state != AllocationState::Costed)
      return reject(Errc::ApproveWithoutQuote, "no acceptable quote for " + a->allocation_id);
    // Re-check under the registry lock: the quote may be stale.
    auto conflicts = conflicts_of(it->second.volume, "");
    if (!conflicts.empty()) {
      quotes_.erase(it);
      return Reject{"Conflicts", std::move(conflicts)};
    }
    AllocationRecord rec = std::move(it->second);
    quotes_.erase(it);
    rec.state = AllocationState::Approved;
    const std::string id = rec.allocation_id;
    registry_.emplace(id, std::move(rec));
    notify();
    return Ack{id, AllocationState::Approved};
  }
  auto transition = [&](const std::string& id, std::initializer_list<AllocationState> from,
                        AllocationState to) -> Message {
    auto it = registry_.find(id);
    if (it == registry_.end()) return reject(Errc::UnknownAllocation, "unknown allocation " + id);
    bool ok = false;
    for (auto s : from) ok |= it->second.state == s;
    if (!ok) {
      return reject(Errc::IncompatibleStatus,
                    id + " is " + to_string(it->second.state) + ", cannot become " + to_string(to));
    }
    if (to == AllocationState::Released) {
      registry_.erase(it);
    } else {
      it->second.state = to;
    }
    notify();
    return Ack{id, to};
  };
  if (const auto* a = std::get_if<Activate>(&m))
    return transition(a->allocation_id, {AllocationState::Approved}, AllocationState::Active);
  if (const auto* c = std::get_if<Complete>(&m))
    return transition(c->allocation_id, {AllocationState::Active}, AllocationState::Completed);
  if (const auto* r = std::get_if<Release>(&m)) {
    return transition(r->allocation_id,
                      {AllocationState::Approved, AllocationState::Active,
                       AllocationState::Completed},
                      AllocationState::Released);
  }
  return reject(Errc::Parse, "unexpected " + message_type(m) + " from a client");
}

Envelope UtmServer::handle(const Envelope& msg) {
  std::lock_guard lock(mu_);
  auto& session = sessions_[msg.session];
  if (msg.seq == session.last_seq && session.last_reply) return *session.last_reply;
  if (msg.seq != session.last_seq + 1) {
    return Envelope{msg.session, msg.seq,
                    reject(Errc::OutOfOrderMessage,
                           "expected seq " + std::to_string(session.last_seq + 1) + ", got " +
                               std::to_string(msg.seq))};
  }
  Envelope reply{msg.session, msg.seq, dispatch(msg.body)};
  session.last_seq = msg.seq;
  session.last_reply = reply;
  return reply;
}

std::vector<AllocationRecord> UtmServer::allocations() const {
  std::lock_guard lock(mu_);
  std::vector<AllocationRecord> out;
  for (const auto& [id, r] : registry_) out.push_back(r);
  return out;
}

std::vector<NoFlyZone> UtmServer::zones() const {
  std::lock_guard lock(mu_);
  return zones_;
}

void UtmServer::add_zone(NoFlyZone zone) {
  zone.validate();
  std::lock_guard lock(mu_);
  zones_.push_back(std::move(zone));
}

void UtmServer::set_mutation_observer(
    std::function<void(const std::vector<AllocationRecord>&)> f) {
  std::lock_guard lock(mu_);
  observer_ = std::move(f);
}

std::string UtmServer::registry_json() const {
  std::lock_guard lock(mu_);
  ordered_json j;
  j["version"] = 1;
  j["noflyzones"] = ordered_json::array();
  for (const auto& z : zones_) j["noflyzones"].push_back(io::to_json(z));
  j["allocations"] = ordered_json::array();
  for (const auto& [id, r] : registry_) j["allocations"].push_back(to_json(r));
  return j.dump(2) + "\n";
}

void UtmServer::load_registry_json(const std::string& text) {
  const json j = io::parse_text(text, "registry");
  if (j.value("version", 1) != 1) fail(Errc::Parse, "unsupported registry version");
  auto zones = io::zones_from(j.value("noflyzones", json::array()), "noflyzones");
  std::map<std::string, AllocationRecord> reg;
  std::uint64_t max_id = 0;
  const json allocs = j.value("allocations", json::array());
  for (std::size_t i = 0; i < allocs.size(); ++i) {
    auto r = record_from(allocs[i], "allocations[" + std::to_string(i) + "]");
    if (r.allocation_id.size() > 1 && r.allocation_id[0] == 'A') {
      try {
        max_id = std::max<std::uint64_t>(max_id, std::stoull(r.allocation_id.substr(1)));
      } catch (const std::exception&) {
      }
    }
    const std::string id = r.allocation_id;
    reg.emplace(id, std::move(r));
  }
  std::lock_guard lock(mu_);
  zones_ = std::move(zones);
  registry_ = std::move(reg);
  id_counter_ = std::max(id_counter_, max_id);
}

void UtmServer::save(const std::string& path) const { io::write_file(path, registry_json()); }

void UtmServer::load(const std::string& path) {
  std::ifstream probe(path);
  if (!probe) return;  // a missing registry starts empty
  load_registry_json(io::read_file(path).dump());
}

// ---- transports ----

Envelope InProcessTransport::exchange(const Envelope& msg) {
  if (drops_ > 0) {
    --drops_;
    if (drop_after_) server_.handle(decode(encode(msg)));
    fail(Errc::TransportFailure, "message dropped");
  }
  // Round-trip through the wire form so both transports see the same bytes.
  return decode(encode(server_.handle(decode(encode(msg)))));
}

namespace {

void write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      fail(Errc::TransportFailure, std::string("send: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Returns false on EOF before any byte.
bool read_all(int fd, char* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, data + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      fail(Errc::TransportFailure, "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(Errc::TransportFailure, std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

constexpr std::uint32_t kMaxFrame = 16u << 20;

}  // namespace

void write_frame(int fd, const std::string& payload) {
  if (payload.size() > kMaxFrame) fail(Errc::TransportFailure, "frame too large");
  const std::uint32_t n = htonl(static_cast<std::uint32_t>(payload.size()));
  std::string buf(reinterpret_cast<const char*>(&n), 4);
  buf += payload;
  write_all(fd, buf.data(), buf.size());
}

std::optional<std::string> read_frame(int fd) {
  std::uint32_t n = 0;
  if (!read_all(fd, reinterpret_cast<char*>(&n), 4)) return std::nullopt;
  n = ntohl(n);
  if (n > kMaxFrame) fail(Errc::TransportFailure, "frame too large");
  std::string payload(n, '\0');
  if (n > 0 && !read_all(fd, payload.data(), n))
    fail(Errc::TransportFailure, "connection closed mid-frame");
  return payload;
}

TcpTransport::TcpTransport(std::string host, int port, int timeout_ms)
    : host_(std::move(host)), port_(port), timeout_ms_(timeout_ms) {}

TcpTransport::~TcpTransport() { close_socket(); }

void TcpTransport::close_socket() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void TcpTransport::connect_socket() {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(port_);
  if (::getaddrinfo(host_.c_str(), port.c_str(), &hints, &res) != 0 || !res)
    fail(Errc::TransportFailure, "cannot resolve " + host_);
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    timeval tv{timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) fail(Errc::TransportFailure, "cannot connect to " + host_ + ":" + port);
  fd_ = fd;
}

Envelope TcpTransport::exchange(const Envelope& msg) {
  try {
    if (fd_ < 0) connect_socket();
    write_frame(fd_, encode(msg));
    auto reply = read_frame(fd_);
    if (!reply) fail(Errc::TransportFailure, "connection closed");
    return decode(*reply);
  } catch (const Error& e) {
    close_socket();
    if (e.code() == Errc::Parse) fail(Errc::TransportFailure, e.what());
    throw;
  }
}

TcpServer::TcpServer(UtmServer& server, int port, std::string bind_address) : server_(server) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) fail(Errc::TransportFailure, "socket failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    fail(Errc::TransportFailure, "bad bind address " + bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    fail(Errc::TransportFailure, "cannot listen on port " + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::accept_loop() {
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (r <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(conn_mu_);
    conn_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void TcpServer::serve_connection(int fd) {
  try {
    while (!stopping_) {
      auto frame = read_frame(fd);
      if (!frame) break;
      Envelope reply;
      try {
        reply = server_.handle(decode(*frame));
      } catch (const Error& e) {
        reply = Envelope{"", 0, Reject{std::string(to_string(e.code())), {e.what()}}};
      }
      write_frame(fd, encode(reply));
    }
  } catch (const Error&) {
    // connection dropped; the client retries on a new one
  }
  ::shutdown(fd, SHUT_RDWR);
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    workers = std::move(workers_);
  }
  for (auto& t : workers) t.join();
  for (int fd : conn_fds_) ::close(fd);
  conn_fds_.clear();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

void TcpServer::wait() {
  while (!stopping_) ::poll(nullptr, 0, 100);
}

// ---- client ----

UtmClient::UtmClient(Transport& transport, std::string session, int retries)
    : transport_(transport), session_(std::move(session)), retries_(retries) {}

Message UtmClient::send(Message body) {
  const Envelope env{session_, ++seq_, std::move(body)};
  std::string last_error;
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    try {
      Envelope reply = transport_.exchange(env);
      if (reply.seq != env.seq) {
        last_error = "reply for seq " + std::to_string(reply.seq);
        continue;
      }
      return std::move(reply.body);
    } catch (const Error& e) {
      if (e.code() != Errc::TransportFailure) throw;
      last_error = e.what();
    }
  }
  fail(Errc::TransportFailure,
       "no reply after " + std::to_string(retries_ + 1) + " attempts: " + last_error);
}

namespace {

[[noreturn]] void raise(const Reject& r) {
  std::string msg = r.code;
  for (const auto& reason : r.reasons) msg += ": " + reason;
  fail(errc_from(r.code).value_or(Errc::PreconditionViolated), msg, r.reasons);
}

template <typename T>
T expect(Message m) {
  if (auto* t = std::get_if<T>(&m)) return std::move(*t);
  if (auto* r = std::get_if<Reject>(&m)) raise(*r);
  fail(Errc::TransportFailure, "unexpected " + message_type(m) + " reply");
}

}  // namespace

AirspaceVolume shift_time(const AirspaceVolume& v, double dt) {
  return {v.tube, {v.window.t_start + dt, v.window.t_end + dt}};
}

AirspaceVolume shift_altitude(const AirspaceVolume& v, double dh) {
  auto pts = v.tube.centerline().waypoints();
  for (auto& p : pts) p.up += dh;
  return {CorridorTube(geometry::build_route(std::move(pts)), v.tube.outer_radius()), v.window};
}

AirspaceVolume with_radius(const AirspaceVolume& v, double radius) {
  return {CorridorTube(v.tube.centerline(), radius), v.window};
}

NegotiationResult negotiate(UtmClient& client, const AirspaceVolume& volume,
                            const AdjustmentPolicy& adjust, int max_rounds, bool priority) {
  require(max_rounds >= 1, "max_rounds must be >= 1");
  NegotiationResult result;
  AirspaceVolume current = volume;
  for (int round = 1; round <= max_rounds; ++round) {
    const auto info = expect<InfoResponse>(client.send(InfoRequest{current}));
    const auto quote = expect<CostQuote>(client.send(Propose{current, priority, round}));
    RoundLog log{round, current, quote.cost, quote.conflicts, ""};
    if (quote.acceptable()) {
      Message reply = client.send(Approve{quote.allocation_id});
      if (std::holds_alternative<Ack>(reply)) {
        result.record = AllocationRecord{quote.allocation_id, current, AllocationState::Approved,
                                         quote.cost, round, priority};
        result.history.push_back(std::move(log));
        return result;
      }
      const auto& rej = std::get<Reject>(reply);
      if (rej.code != "Conflicts") raise(rej);
      log.conflicts = rej.reasons;
    }
    if (round == max_rounds) {
      result.history.push_back(std::move(log));
      break;
    }

    auto clears = [&](const AirspaceVolume& v) {
      for (const auto& a : info.allocated_volumes) {
        if (volumes_intersect(v, a.volume)) return false;
      }
      for (const auto& z : info.noflyzones) {
        if (geometry::intersects_nofly(v.tube, z, v.window)) return false;
      }
      return true;
    };
    const double shrunk =
        std::max(adjust.min_radius, current.tube.outer_radius() - adjust.radius_shrink);
    std::vector<std::pair<std::string, AirspaceVolume>> candidates;
    candidates.emplace_back("time+" + io::json(adjust.time_shift).dump(),
                            shift_time(current, adjust.time_shift));
    candidates.emplace_back("altitude+" + io::json(adjust.altitude_shift).dump(),
                            shift_altitude(current, adjust.altitude_shift));
    if (shrunk < current.tube.outer_radius())
      candidates.emplace_back("radius=" + io::json(shrunk).dump(), with_radius(current, shrunk));
    bool picked = false;
    for (auto& [name, v] : candidates) {
      if (clears(v)) {
        log.adjustment = name;
        current = std::move(v);
        picked = true;
        break;
      }
    }
    if (!picked) {
      log.adjustment = "all";
      current = with_radius(shift_altitude(shift_time(current, adjust.time_shift),
                                           adjust.altitude_shift),
                            shrunk);
    }
    result.history.push_back(std::move(log));
  }
  return result;
}

Ack activate(UtmClient& client, const std::string& id) {
  return expect<Ack>(client.send(Activate{id}));
}
Ack complete(UtmClient& client, const std::string& id) {
  return expect<Ack>(client.send(Complete{id}));
}
Ack release(UtmClient& client, const std::string& id) {
  return expect<Ack>(client.send(Release{id}));
}

}  // namespace corridrone::utm
