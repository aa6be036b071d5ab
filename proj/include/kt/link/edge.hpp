#pragma once

#include <atomic>
#include <memory>

#include "kt/data/splits.hpp"
#include "kt/link/transport.hpp"
#include "kt/protocol/kt_run.hpp"

namespace kt::link {

/// Teacher endpoint. Each connection is served by one sequential loop;
/// connections run concurrently against the shared read-only teacher.
class TeacherServer {
public:
    TeacherServer(std::shared_ptr<const protocol::Teacher> teacher, data::SampleSequence teacher_stream,
                  protocol::ClassMapping mapping);

    /// Handshake, then LABEL_REQ/LABEL_RESP until BYE, peer close or idle
    /// timeout. Returns the number of labels served.
    std::size_t serve_connection(ByteStream& stream, Millis idle_timeout) const;

    /// Accepts connections until `max_connections` have been served (0 means no
    /// limit) or `stop` becomes true.
    void serve(TcpListener& listener, std::size_t max_connections, const std::atomic<bool>* stop,
               Millis idle_timeout) const;

private:
    std::shared_ptr<const protocol::Teacher> teacher_;
    data::SampleSequence stream_;
    protocol::ClassMapping mapping_;
};

struct ClientOptions {
    Millis timeout{5000};
};

/// Student endpoint. Throws handshake_refused before any training when the
/// server rejects or presents a different mapping digest. A timeout or a lost
/// connection during the run ends it with stop reason `aborted`.
protocol::RunResult run_student_client(ByteStream& stream, models::Model student,
                                       const data::SampleSequence& student_stream,
                                       const std::vector<std::size_t>* truth, const protocol::ClassMapping& mapping,
                                       nn::Adam<float>& optimizer, const protocol::KtOptions& options,
                                       const ClientOptions& client = {});

}  // namespace kt::link
