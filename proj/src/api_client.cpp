#include "cafs/api_client.hpp"

#include <boost/asio.hpp>

#include "cafs/config.hpp"
#include "cafs/error.hpp"

namespace cafs {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

nlohmann::json api_call(const std::string& api_addr, const nlohmann::json& request,
                        std::chrono::milliseconds timeout) {
  auto [host, port] = split_host_port(api_addr);
  asio::io_context io;
  tcp::socket sock(io);
  asio::streambuf buf;
  std::string line = request.dump() + "\n";
  boost::system::error_code result = asio::error::timed_out;
  std::size_t reply_len = 0;

  tcp::resolver resolver(io);
  boost::system::error_code ec;
  auto endpoints = resolver.resolve(host, std::to_string(port), ec);
  if (ec) throw Error(Errc::IoFailure, "cannot resolve " + api_addr + ": " + ec.message());

  asio::async_connect(sock, endpoints, [&](const boost::system::error_code& cec, const tcp::endpoint&) {
    if (cec) {
      result = cec;
      return;
    }
    asio::async_write(sock, asio::buffer(line), [&](const boost::system::error_code& wec, std::size_t) {
      if (wec) {
        result = wec;
        return;
      }
      asio::async_read_until(sock, buf, '\n', [&](const boost::system::error_code& rec, std::size_t n) {
        result = rec;
        reply_len = n;
      });
    });
  });
  io.run_for(timeout);
  if (result) throw Error(Errc::IoFailure, "daemon at " + api_addr + " unreachable: " + result.message());

  std::string reply(asio::buffers_begin(buf.data()), asio::buffers_begin(buf.data()) + reply_len);
  auto j = nlohmann::json::parse(reply, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::Malformed, "daemon reply is not JSON");
  return j;
}

}  // namespace cafs
