#include "cafs/daemon.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <boost/asio.hpp>
#include <deque>
#include <thread>

#include "cafs/api.hpp"
#include "cafs/node.hpp"
#include "cafs/wire.hpp"

namespace cafs {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxApiLine = 64u << 20;

/// One TCP stream carrying length-prefixed peer frames in both directions.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  using Sink = std::function<void(ByteView)>;
  using Closed = std::function<void(const std::shared_ptr<Connection>&)>;

  Connection(tcp::socket sock, Sink sink, Closed closed)
      : sock_(std::move(sock)), sink_(std::move(sink)), closed_(std::move(closed)) {}

  tcp::socket& socket() { return sock_; }
  bool open() const { return sock_.is_open(); }

  void start_reading() { read_header(); }

  void enqueue(Bytes frame) {
    queue_.push_back(std::move(frame));
    if (ready_ && !writing_) write_next();
  }

  void mark_ready() {
    ready_ = true;
    if (!writing_ && !queue_.empty()) write_next();
  }

  void close() {
    if (!sock_.is_open()) return;
    boost::system::error_code ignored;
    sock_.shutdown(tcp::socket::shutdown_both, ignored);
    sock_.close(ignored);
    queue_.clear();
    if (closed_) closed_(shared_from_this());
  }

 private:
  void read_header() {
    buf_.resize(4);
    asio::async_read(sock_, asio::buffer(buf_), [self = shared_from_this()](auto ec, std::size_t) {
      if (ec) return self->close();
      Reader r(self->buf_);
      auto len = r.u32();
      if (len == 0 || len > wire::kMaxFrame) return self->close();
      self->read_body(std::size_t{len} + 4);
    });
  }

  void read_body(std::size_t total) {
    buf_.resize(total);
    asio::async_read(sock_, asio::buffer(buf_.data() + 4, total - 4), [self = shared_from_this()](auto ec, std::size_t) {
      if (ec) return self->close();
      self->sink_(self->buf_);
      if (self->sock_.is_open()) self->read_header();
    });
  }

  void write_next() {
    if (queue_.empty()) {
      writing_ = false;
      return;
    }
    writing_ = true;
    asio::async_write(sock_, asio::buffer(queue_.front()), [self = shared_from_this()](auto ec, std::size_t) {
      if (ec) return self->close();
      if (!self->queue_.empty()) self->queue_.pop_front();
      self->write_next();
    });
  }

  tcp::socket sock_;
  Sink sink_;
  Closed closed_;
  Bytes buf_;
  std::deque<Bytes> queue_;
  bool ready_ = false;
  bool writing_ = false;
};

class AsioRuntime final : public Runtime {
 public:
  explicit AsioRuntime(asio::io_context& io) : io_(io), rng_(std::random_device{}()) {}

  ~AsioRuntime() override {
    for (auto& [addr, c] : outbound_) c->close();
  }

  std::uint64_t now_ms() const override {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::system_clock::now().time_since_epoch())
                                          .count());
  }

  TimerId schedule(std::uint64_t delay_ms, std::function<void()> fn) override {
    auto id = next_timer_++;
    auto timer = std::make_unique<asio::steady_timer>(io_, std::chrono::milliseconds(delay_ms));
    timer->async_wait([this, id](const boost::system::error_code& ec) {
      if (ec) return;
      auto it = timers_.find(id);
      if (it == timers_.end()) return;
      auto cb = std::move(it->second.second);
      timers_.erase(it);
      cb();
    });
    timers_.emplace(id, std::make_pair(std::move(timer), std::move(fn)));
    return id;
  }

  void cancel(TimerId id) override {
    auto it = timers_.find(id);
    if (it == timers_.end()) return;
    it->second.first->cancel();
    timers_.erase(it);
  }

  void send(const std::string& address, Bytes frame) override {
    auto it = outbound_.find(address);
    if (it == outbound_.end() || !it->second->open()) it = connect(address);
    if (it != outbound_.end()) it->second->enqueue(std::move(frame));
  }

  std::mt19937_64& rng() override { return rng_; }

  Connection::Sink sink;

 private:
  using Conns = std::map<std::string, std::shared_ptr<Connection>>;

  Conns::iterator connect(const std::string& address) {
    std::pair<std::string, std::uint16_t> hp;
    try {
      hp = split_host_port(address);
    } catch (const Error&) {
      spdlog::debug("dropping frame for unparseable address {}", address);
      return outbound_.end();
    }
    auto conn = std::make_shared<Connection>(tcp::socket(io_), sink, [this, address](const auto& c) {
      auto it = outbound_.find(address);
      if (it != outbound_.end() && it->second == c) outbound_.erase(it);
    });
    auto resolver = std::make_shared<tcp::resolver>(io_);
    resolver->async_resolve(
        hp.first, std::to_string(hp.second),
        [conn, resolver, address](const boost::system::error_code& ec, const tcp::resolver::results_type& results) {
          if (ec) {
            spdlog::debug("resolve {} failed: {}", address, ec.message());
            return conn->close();
          }
          asio::async_connect(conn->socket(), results, [conn, address](const boost::system::error_code& ec2, auto) {
            if (ec2) {
              spdlog::debug("connect {} failed: {}", address, ec2.message());
              return conn->close();
            }
            boost::system::error_code ignored;
            conn->socket().set_option(tcp::no_delay(true), ignored);
            conn->mark_ready();
            conn->start_reading();
          });
        });
    outbound_[address] = conn;
    return outbound_.find(address);
  }

  asio::io_context& io_;
  std::mt19937_64 rng_;
  TimerId next_timer_ = 1;
  std::map<TimerId, std::pair<std::unique_ptr<asio::steady_timer>, std::function<void()>>> timers_;
  Conns outbound_;
};

/// Newline-delimited JSON session; requests are answered in order.
class ApiSession : public std::enable_shared_from_this<ApiSession> {
 public:
  ApiSession(tcp::socket sock, ApiContext& ctx) : sock_(std::move(sock)), ctx_(ctx), buf_(kMaxApiLine) {}

  void start() { read_next(); }

 private:
  void read_next() {
    asio::async_read_until(sock_, buf_, '\n', [self = shared_from_this()](auto ec, std::size_t n) {
      if (ec) return;
      std::string line(asio::buffers_begin(self->buf_.data()), asio::buffers_begin(self->buf_.data()) + n);
      self->buf_.consume(n);
      self->handle(line);
    });
  }

  void handle(const std::string& line) {
    auto req = Json::parse(line, nullptr, false);
    auto answered = std::make_shared<bool>(false);
    auto reply = [self = shared_from_this(), answered](Json out) {
      if (*answered) return;
      *answered = true;
      self->out_ = out.dump() + "\n";
      asio::async_write(self->sock_, asio::buffer(self->out_), [self](auto ec, std::size_t) {
        if (!ec) self->read_next();
      });
    };
    if (req.is_discarded()) {
      reply(error_to_json(Error(Errc::InvalidArgument, "request is not valid JSON")));
      return;
    }
    spdlog::debug("api request {}", req.value("op", std::string("?")));
    handle_api_request(ctx_, req, reply);
  }

  tcp::socket sock_;
  ApiContext& ctx_;
  asio::streambuf buf_;
  std::string out_;
};

tcp::acceptor bind_acceptor(asio::io_context& io, const std::string& addr) {
  auto [host, port] = split_host_port(addr);
  boost::system::error_code ec;
  auto ip = asio::ip::make_address(host == "localhost" ? "127.0.0.1" : host, ec);
  if (ec) throw Error(Errc::InvalidArgument, "listen address must be a literal IP: " + addr);
  tcp::endpoint ep(ip, port);
  tcp::acceptor acc(io);
  acc.open(ep.protocol());
  acc.set_option(tcp::acceptor::reuse_address(true));
  acc.bind(ep, ec);
  if (ec == asio::error::address_in_use) throw Error(Errc::AddrInUse, addr + " is already in use");
  if (ec) throw Error(Errc::IoFailure, "bind " + addr + ": " + ec.message());
  acc.listen();
  return acc;
}

std::string endpoint_text(const tcp::acceptor& acc) {
  auto ep = acc.local_endpoint();
  return ep.address().to_string() + ":" + std::to_string(ep.port());
}

}  // namespace

struct Daemon::Impl {
  DaemonConfig config;
  Keypair identity;
  asio::io_context io;
  std::optional<tcp::acceptor> peer_acceptor;
  std::optional<tcp::acceptor> api_acceptor;
  std::string peer_addr;
  std::string api_addr;
  std::unique_ptr<AsioRuntime> runtime;
  std::unique_ptr<FsBlockStore> store;
  Chain chain;
  std::unique_ptr<Node> node;
  std::unique_ptr<ApiContext> api;
  std::set<std::shared_ptr<Connection>> inbound;
  std::thread thread;
  std::atomic<bool> joined{false};
  std::atomic<bool> stopped{false};

  Impl(DaemonConfig c, Keypair k) : config(std::move(c)), identity(std::move(k)) {}

  std::filesystem::path chain_file() const { return config.data_dir / "chain.bin"; }

  void load_chain() {
    if (!std::filesystem::exists(chain_file())) return;
    try {
      chain = Chain(read_chain_file(chain_file()));
    } catch (const Error& e) {
      throw Error(Errc::LedgerValidationFailed, std::string("chain file unreadable: ") + e.what());
    }
    if (auto v = validate_chain(chain, config.difficulty)) {
      throw Error(Errc::LedgerValidationFailed, "chain file invalid at height " + std::to_string(v->height) + ": " +
                                                    violation_name(v->kind));
    }
  }

  void accept_peers() {
    peer_acceptor->async_accept([this](const boost::system::error_code& ec, tcp::socket sock) {
      if (ec) return;
      boost::system::error_code ignored;
      sock.set_option(tcp::no_delay(true), ignored);
      auto conn = std::make_shared<Connection>(std::move(sock), runtime->sink,
                                               [this](const auto& c) { inbound.erase(c); });
      inbound.insert(conn);
      conn->mark_ready();
      conn->start_reading();
      accept_peers();
    });
  }

  void accept_api() {
    api_acceptor->async_accept([this](const boost::system::error_code& ec, tcp::socket sock) {
      if (ec) return;
      std::make_shared<ApiSession>(std::move(sock), *api)->start();
      accept_api();
    });
  }

  void shutdown() {
    boost::system::error_code ignored;
    if (peer_acceptor) peer_acceptor->close(ignored);
    if (api_acceptor) api_acceptor->close(ignored);
    auto conns = inbound;
    for (const auto& c : conns) c->close();
    io.stop();
  }
};

Daemon::Daemon(DaemonConfig config, Keypair identity)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(identity))) {}

Daemon::~Daemon() {
  stop();
  impl_->node.reset();
  impl_->runtime.reset();
}

void Daemon::start() {
  auto& d = *impl_;
  std::filesystem::create_directories(d.config.data_dir);
  d.load_chain();
  d.peer_acceptor.emplace(bind_acceptor(d.io, d.config.listen_addr));
  d.api_acceptor.emplace(bind_acceptor(d.io, d.config.api_addr));
  d.peer_addr = endpoint_text(*d.peer_acceptor);
  d.api_addr = endpoint_text(*d.api_acceptor);

  d.store = std::make_unique<FsBlockStore>(d.config.data_dir / "blocks");
  d.runtime = std::make_unique<AsioRuntime>(d.io);

  NodeConfig nc;
  nc.listen_addr = d.peer_addr;
  nc.bootstrap = d.config.bootstrap;
  nc.is_registrar = d.config.registrar;
  nc.registrar_addr = d.config.registrar_addr;
  nc.dag.chunk_size = d.config.chunk_size;
  nc.ledger.difficulty = d.config.difficulty;
  nc.ledger.flush_ms = d.config.flush_ms;
  nc.provide_fetched = true;
  auto chain_file = d.chain_file();
  d.node = std::make_unique<Node>(nc, d.identity, *d.runtime, *d.store, d.chain,
                                  [chain_file](const LedgerBlock& b, std::uint64_t height) {
                                    append_block_file(chain_file, b);
                                    spdlog::info("ledger block {} appended ({} entries)", height, b.entries.size());
                                  });
  load_name_sequences(d.config.data_dir, d.node->name_sequences());
  Node* node = d.node.get();
  d.runtime->sink = [node](ByteView frame) { node->on_frame(frame); };
  d.api = std::make_unique<ApiContext>(ApiContext{*d.node, d.config.data_dir, chain_file, d.config.difficulty});

  d.accept_peers();
  d.accept_api();
  spdlog::info("node {} listening on {} (api {}), role {}", d.node->id().text(), d.peer_addr, d.api_addr,
               d.config.registrar ? "registrar" : "peer");
  asio::post(d.io, [this] {
    impl_->node->join([this](Outcome<Unit> r) {
      if (r) {
        spdlog::info("joined: {} contacts, ledger length {}", impl_->node->dht().table().size(),
                     impl_->chain.length());
      } else {
        spdlog::warn("join incomplete: {}", r.error().what());
      }
      impl_->joined = true;
    });
  });
}

void Daemon::run() {
  asio::signal_set signals(impl_->io, SIGINT, SIGTERM);
  signals.async_wait([this](const boost::system::error_code& ec, int) {
    if (!ec) impl_->shutdown();
  });
  auto guard = asio::make_work_guard(impl_->io);
  impl_->io.run();
}

void Daemon::run_in_background() {
  impl_->thread = std::thread([this] {
    auto guard = asio::make_work_guard(impl_->io);
    impl_->io.run();
  });
}

void Daemon::stop() {
  if (impl_->stopped.exchange(true)) return;
  if (impl_->thread.joinable()) {
    asio::post(impl_->io, [this] { impl_->shutdown(); });
    impl_->thread.join();
  } else {
    impl_->shutdown();
  }
}

const DaemonConfig& Daemon::config() const { return impl_->config; }
NodeId Daemon::id() const { return impl_->identity.node_id(); }
std::string Daemon::peer_address() const { return impl_->peer_addr; }
std::string Daemon::api_address() const { return impl_->api_addr; }
bool Daemon::joined() const { return impl_->joined; }

}  // namespace cafs
