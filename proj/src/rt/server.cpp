#include "bmui/rt/server.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "bmui/error.hpp"

namespace bmui::rt {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::string_view kFallbackPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>bmui</title></head>
<body style="font-family:sans-serif">
<h1>bmui</h1>
<p>Protocol <code>bmui-ws/1</code> at <code>/ws</code>. No UI bundle is installed.</p>
<pre id="s">connecting...</pre>
<script>
const s = document.getElementById('s');
const ws = new WebSocket((location.protocol === 'https:' ? 'wss://' : 'ws://') + location.host + '/ws');
ws.onmessage = (e) => {
  const m = JSON.parse(e.data);
  if (m.type === 'telemetry')
    s.textContent = 'step ' + m.t_step + '  angle ' + m.elbow_angle_deg.toFixed(1) + ' deg  ' + m.direction;
};
ws.onclose = () => { s.textContent = 'disconnected'; };
</script>
</body></html>
)";

std::string_view view(beast::string_view s) { return {s.data(), s.size()}; }

std::string url_decode(std::string_view in) {
  std::string out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == '%' && i + 2 < in.size() && std::isxdigit(static_cast<unsigned char>(in[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(in[i + 2]))) {
      out.push_back(static_cast<char>(std::stoi(std::string(in.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(in[i]);
    }
  }
  return out;
}

}  // namespace

std::string mime_type(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".wasm") return "application/wasm";
  if (ext == ".txt") return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, std::string_view target) {
  std::string path = url_decode(target.substr(0, target.find_first_of("?#")));
  if (path.empty() || path[0] != '/' || path.find('\0') != std::string::npos) return std::nullopt;
  std::filesystem::path rel;
  for (const auto& part : std::filesystem::path(path.substr(1))) {
    if (part == "..") return std::nullopt;
    if (part.empty() || part == ".") continue;
    rel /= part;
  }
  if (rel.empty() || path.back() == '/') rel /= "index.html";
  return root / rel;
}

// ---- sessions ---------------------------------------------------------------

namespace {

struct Hub;

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}
  void run(http::request<http::string_body> req);
  void send(std::shared_ptr<const std::string> text, bool droppable);
  void close();

 private:
  struct Out {
    std::shared_ptr<const std::string> text;
    bool droppable;
  };
  void on_accept(beast::error_code ec);
  void do_read();
  void on_read(beast::error_code ec, std::size_t);
  void do_write();
  void on_write(beast::error_code ec, std::size_t);

  websocket::stream<beast::tcp_stream> ws_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  std::deque<Out> queue_;  // front is in flight while writing_
  bool writing_ = false;
};

struct Hub {
  Pipeline& pipeline;
  std::mutex mu;
  std::set<std::shared_ptr<WsSession>> sessions;

  void add(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lk(mu);
    sessions.insert(s);
  }
  void remove(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lk(mu);
    sessions.erase(s);
  }
  std::vector<std::shared_ptr<WsSession>> snapshot() {
    std::lock_guard lk(mu);
    return {sessions.begin(), sessions.end()};
  }
};

void WsSession::run(http::request<http::string_body> req) {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.set_option(websocket::stream_base::decorator(
      [](websocket::response_type& res) { res.set(http::field::server, "bmui"); }));
  ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
}

void WsSession::on_accept(beast::error_code ec) {
  if (ec) return;
  ws_.text(true);
  hub_.add(shared_from_this());
  send(std::make_shared<const std::string>(hub_.pipeline.hello_json()), false);
  do_read();
}

void WsSession::do_read() {
  ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
}

void WsSession::on_read(beast::error_code ec, std::size_t) {
  if (ec) {
    hub_.remove(shared_from_this());
    return;
  }
  const std::string text = beast::buffers_to_string(buffer_.data());
  buffer_.consume(buffer_.size());
  send(std::make_shared<const std::string>(hub_.pipeline.handle_message(text)), false);
  do_read();
}

// All handlers run on the single I/O thread.
void WsSession::send(std::shared_ptr<const std::string> text, bool droppable) {
  if (droppable) {
    std::size_t pending = 0;
    for (const auto& o : queue_) pending += o.droppable;
    if (pending >= Server::kMaxBacklog) {
      const auto first = queue_.begin() + (writing_ ? 1 : 0);
      const auto it = std::find_if(first, queue_.end(), [](const Out& o) { return o.droppable; });
      if (it != queue_.end()) queue_.erase(it);
    }
  }
  queue_.push_back({std::move(text), droppable});
  if (!writing_) do_write();
}

void WsSession::do_write() {
  if (queue_.empty()) {
    writing_ = false;
    return;
  }
  writing_ = true;
  ws_.async_write(asio::buffer(*queue_.front().text),
                  beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
}

void WsSession::on_write(beast::error_code ec, std::size_t) {
  queue_.pop_front();
  if (ec) {
    writing_ = false;
    queue_.clear();
    hub_.remove(shared_from_this());
    return;
  }
  do_write();
}

void WsSession::close() {
  beast::error_code ec;
  ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ec);
  ws_.next_layer().socket().close(ec);
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Hub& hub, const std::filesystem::path& root)
      : stream_(std::move(socket)), hub_(hub), root_(root) {}

  void run() {
    asio::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (websocket::is_upgrade(req_)) {
      const std::string_view target = view(req_.target());
      if (target.substr(0, target.find('?')) == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), hub_)->run(std::move(req_));
        return;
      }
    }
    respond();
  }

  void respond() {
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(req_.keep_alive());
    res->set(http::field::server, "bmui");
    auto reply = [&](http::status status, std::string type, std::string body) {
      res->result(status);
      res->set(http::field::content_type, type);
      res->body() = std::move(body);
    };
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      reply(http::status::method_not_allowed, "text/plain", "method not allowed\n");
    } else if (const auto file = resolve_static(root_.empty() ? "." : root_, view(req_.target())); !file) {
      reply(http::status::bad_request, "text/plain", "bad path\n");
    } else if (!root_.empty() && std::filesystem::is_regular_file(*file)) {
      std::ifstream in(*file, std::ios::binary);
      std::ostringstream body;
      body << in.rdbuf();
      reply(http::status::ok, mime_type(*file), body.str());
    } else if (file->filename() == "index.html" && file->parent_path() == (root_.empty() ? "." : root_)) {
      reply(http::status::ok, "text/html; charset=utf-8", std::string(kFallbackPage));
    } else {
      reply(http::status::not_found, "text/plain", "not found\n");
    }
    res->prepare_payload();
    if (req_.method() == http::verb::head) res->body().clear();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  Hub& hub_;
  std::filesystem::path root_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

// ---- server -----------------------------------------------------------------

struct Server::Impl {
  Impl(Pipeline& p, ServerConfig c) : cfg(std::move(c)), hub{p, {}, {}} {}

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), hub, cfg.static_dir)->run();
      accept();
    });
  }

  ServerConfig cfg;
  Hub hub;
  asio::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  bool running = false;
};

Server::Server(Pipeline& pipeline, ServerConfig cfg) : impl_(std::make_unique<Impl>(pipeline, std::move(cfg))) {
  if (!impl_->cfg.static_dir.empty() && !std::filesystem::is_directory(impl_->cfg.static_dir)) {
    throw Error(ErrorCode::startup_error, "static directory not found: " + impl_->cfg.static_dir.string());
  }
  pipeline.subscribe([this](const std::string& text, const TelemetryFrame&) {
    auto shared = std::make_shared<const std::string>(text);
    for (auto& s : impl_->hub.snapshot()) {
      asio::post(impl_->ioc, [s, shared] { s->send(shared, true); });
    }
  });
}

Server::~Server() { stop(); }

int Server::start() {
  auto& im = *impl_;
  try {
    const tcp::endpoint ep(asio::ip::make_address(im.cfg.address), static_cast<unsigned short>(im.cfg.port));
    im.acceptor.open(ep.protocol());
    im.acceptor.set_option(asio::socket_base::reuse_address(true));
    im.acceptor.bind(ep);
    im.acceptor.listen(asio::socket_base::max_listen_connections);
  } catch (const boost::system::system_error& e) {
    throw Error(ErrorCode::startup_error,
                "cannot listen on " + im.cfg.address + ":" + std::to_string(im.cfg.port) + ": " + e.what());
  }
  im.accept();
  im.running = true;
  im.thread = std::thread([&im] { im.ioc.run(); });
  return im.acceptor.local_endpoint().port();
}

void Server::stop() {
  auto& im = *impl_;
  if (!im.running) return;
  im.running = false;
  asio::post(im.ioc, [&im] {
    beast::error_code ec;
    im.acceptor.close(ec);
    for (auto& s : im.hub.snapshot()) s->close();
  });
  // Let the close handlers run, then end the loop.
  asio::post(im.ioc, [&im] { im.ioc.stop(); });
  if (im.thread.joinable()) im.thread.join();
  std::lock_guard lk(im.hub.mu);
  im.hub.sessions.clear();
}

void Server::broadcast(const std::string& text) {
  auto shared = std::make_shared<const std::string>(text);
  for (auto& s : impl_->hub.snapshot()) {
    asio::post(impl_->ioc, [s, shared] { s->send(shared, false); });
  }
}

std::size_t Server::clients() const {
  std::lock_guard lk(impl_->hub.mu);
  return impl_->hub.sessions.size();
}

}  // namespace bmui::rt
