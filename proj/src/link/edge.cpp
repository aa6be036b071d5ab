#include "kt/link/edge.hpp"

#include <list>
#include <thread>

#include "kt/error.hpp"

namespace kt::link {

namespace {

void send_error(FrameChannel& ch, WireError code, const std::string& message) {
    ch.send(FrameType::error, encode_error({static_cast<std::uint16_t>(code), message}));
}

}  // namespace

TeacherServer::TeacherServer(std::shared_ptr<const protocol::Teacher> teacher, data::SampleSequence teacher_stream,
                             protocol::ClassMapping mapping)
    : teacher_(std::move(teacher)), stream_(std::move(teacher_stream)), mapping_(std::move(mapping)) {
    require(teacher_ != nullptr, "teacher server needs a teacher");
    if (teacher_->num_classes() != mapping_.size())
        fail(Errc::class_count_mismatch, "teacher has " + std::to_string(teacher_->num_classes()) +
                                             " classes, mapping " + std::to_string(mapping_.size()));
}

std::size_t TeacherServer::serve_connection(ByteStream& stream, Millis idle_timeout) const {
    FrameChannel ch(stream);
    std::size_t served = 0;
    try {
        const auto first = ch.receive(idle_timeout);
        if (first.type != FrameType::hello) {
            send_error(ch, WireError::unexpected_frame, "expected HELLO, got " + frame_type_name(first.type));
            ch.close();
            return 0;
        }
        const auto hello = decode_hello(first.payload);
        if (hello.version != kProtocolVersion) {
            send_error(ch, WireError::version_mismatch, "server speaks version " + std::to_string(kProtocolVersion));
            ch.close();
            return 0;
        }
        if (hello.mapping_digest != mapping_.digest() || hello.teacher_classes != mapping_.teacher_classes()) {
            send_error(ch, WireError::digest_mismatch, "class mapping differs from the server's");
            ch.close();
            return 0;
        }
        ch.send(FrameType::hello_ack, encode_hello({kProtocolVersion, mapping_.digest(), mapping_.teacher_classes()}));

        for (;;) {
            const auto f = ch.receive(idle_timeout);
            if (f.type == FrameType::bye) {
                ch.send(FrameType::bye);
                break;
            }
            if (f.type != FrameType::label_req) {
                send_error(ch, WireError::unexpected_frame, "unexpected " + frame_type_name(f.type));
                continue;
            }
            std::uint64_t step = 0;
            try {
                step = decode_label_req(f.payload);
            } catch (const Error& e) {
                send_error(ch, WireError::malformed_frame, e.what());
                continue;
            }
            if (step >= stream_.size()) {
                send_error(ch, WireError::step_out_of_range,
                           "step " + std::to_string(step) + " beyond stream of " + std::to_string(stream_.size()));
                continue;
            }
            const auto i = static_cast<std::size_t>(step);
            const auto cls = teacher_->predict(stream_.sample(i), stream_.source_index(i));
            ch.send(FrameType::label_resp, encode_label_resp({step, static_cast<std::uint16_t>(cls)}));
            ++served;
        }
    } catch (const Error& e) {
        if (e.code() == Errc::protocol) {
            try {
                send_error(ch, WireError::malformed_frame, e.what());
            } catch (const Error&) {
            }
        } else if (e.code() != Errc::timeout && e.code() != Errc::connection_closed) {
            throw;
        }
    }
    ch.close();
    return served;
}

void TeacherServer::serve(TcpListener& listener, std::size_t max_connections, const std::atomic<bool>* stop,
                          Millis idle_timeout) const {
    std::list<std::thread> workers;
    std::size_t accepted = 0;
    while ((max_connections == 0 || accepted < max_connections) && !(stop && stop->load())) {
        auto conn = listener.accept(Millis(200));
        if (!conn) continue;
        ++accepted;
        workers.emplace_back([this, idle_timeout, c = std::shared_ptr<TcpStream>(std::move(conn))] {
            try {
                serve_connection(*c, idle_timeout);
            } catch (const std::exception&) {
            }
        });
    }
    for (auto& w : workers) w.join();
}

protocol::RunResult run_student_client(ByteStream& stream, models::Model student,
                                       const data::SampleSequence& student_stream,
                                       const std::vector<std::size_t>* truth, const protocol::ClassMapping& mapping,
                                       nn::Adam<float>& optimizer, const protocol::KtOptions& options,
                                       const ClientOptions& client) {
    require(options.label_source == protocol::LabelSource::pseudo, "the edge client only runs the pseudo-label arm");
    FrameChannel ch(stream);
    ch.send(FrameType::hello, encode_hello({kProtocolVersion, mapping.digest(), mapping.teacher_classes()}));
    Frame reply;
    try {
        reply = ch.receive(client.timeout);
    } catch (const Error& e) {
        fail(Errc::handshake_refused, std::string("no handshake reply: ") + e.what());
    }
    if (reply.type == FrameType::error)
        fail(Errc::handshake_refused, "server refused: " + decode_error(reply.payload).message);
    if (reply.type != FrameType::hello_ack) fail(Errc::handshake_refused, "expected HELLO_ACK, got " + frame_type_name(reply.type));
    const auto ack = decode_hello(reply.payload);
    if (ack.version != kProtocolVersion || ack.mapping_digest != mapping.digest())
        fail(Errc::handshake_refused, "server presented a different protocol version or mapping digest");

    auto remote_label = [&](std::size_t step) -> std::size_t {
        ch.send(FrameType::label_req, encode_label_req(step));
        const auto f = ch.receive(client.timeout);
        if (f.type == FrameType::error) {
            const auto e = decode_error(f.payload);
            fail(Errc::protocol, "server error " + std::to_string(e.code) + ": " + e.message);
        }
        if (f.type != FrameType::label_resp) fail(Errc::protocol, "expected LABEL_RESP, got " + frame_type_name(f.type));
        const auto resp = decode_label_resp(f.payload);
        if (resp.step != step)
            fail(Errc::protocol, "response for step " + std::to_string(resp.step) + ", expected " + std::to_string(step));
        return resp.teacher_class;
    };

    auto result = protocol::kt_run_with(remote_label, std::move(student), student_stream, truth, mapping, optimizer,
                                        options);
    if (result.stop_reason != protocol::StopReason::aborted) {
        try {
            ch.send(FrameType::bye);
            ch.receive(client.timeout);
        } catch (const Error&) {
        }
    }
    ch.close();
    return result;
}

}  // namespace kt::link
