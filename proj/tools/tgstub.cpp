// Stand-alone Bot API stub for manual runs of `propwatch serve`.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "propwatch/data.hpp"
#include "propwatch/modbot.hpp"

namespace {
std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Telegram Bot API stub: getUpdates, deleteMessage, banChatMember", "tgstub"};
    std::string token = "test-token", host = "127.0.0.1", updates, calls_out;
    int port = 0;
    app.add_option("--token", token, "Accepted bot token")->capture_default_str();
    app.add_option("--host", host, "Bind address")->capture_default_str();
    app.add_option("--port", port, "Port (0 picks one)")->capture_default_str();
    app.add_option("--updates", updates, "JSONL of update objects served by getUpdates");
    app.add_option("--calls", calls_out, "Write the recorded moderation calls here on exit");
    CLI11_PARSE(app, argc, argv);

    try {
        propwatch::StubTelegramServer stub(token, host, port);
        if (!updates.empty())
            for (const auto& line : propwatch::read_lines(updates)) stub.push_update(line);
        std::cout << stub.base_url() << std::endl;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        stub.stop();
        if (!calls_out.empty()) {
            std::ofstream out(calls_out);
            for (const auto& c : stub.calls())
                out << "{\"method\":\"" << c.method << "\",\"chat_id\":\"" << c.chat_id << "\",\"target\":\""
                    << c.target << "\"}\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
