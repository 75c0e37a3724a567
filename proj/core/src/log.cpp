#include "gsdrag/log.hpp"

#include <iostream>
#include <mutex>

namespace gsdrag {
namespace {
std::mutex g_mutex;
std::function<void(std::string_view)> g_handler;
}  // namespace

void set_warning_handler(std::function<void(std::string_view)> handler) {
  std::lock_guard lock(g_mutex);
  g_handler = std::move(handler);
}

void warn(std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (g_handler)
    g_handler(message);
  else
    std::cerr << "gsdrag: warning: " << message << '\n';
}

}  // namespace gsdrag
