#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedkbp/param_vector.hpp"

namespace fedkbp {

// Framed binary coordinator/worker protocol.
//
// Frame layout (all integers little-endian):
//   magic "FKBP" (4 bytes) | version u8 = 1 | msg_type u8 |
//   round u32 | site_id u16 | payload_len u64 | payload
//
// Payloads:
//   JOIN          : empty
//   ROUND_BEGIN   : params block
//   ROUND_UPDATE  : n u64 | train_loss f64 | params block
//   ROUND_COMMIT  : params block
//
// Params block: manifest_text_len u32 | manifest text ("name d0 d1 ...\n"
// per layer) | value_count u64 | value_count raw f32 values.

enum class MessageType : std::uint8_t {
    JOIN = 1,
    ROUND_BEGIN = 2,
    ROUND_UPDATE = 3,
    ROUND_COMMIT = 4,
};

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 20;

struct Message {
    MessageType type = MessageType::JOIN;
    std::uint32_t round = 0;
    std::uint16_t site_id = 0;
    ParamVector params;           // empty for JOIN
    std::uint64_t n = 0;          // ROUND_UPDATE only
    double train_loss = 0.0;      // ROUND_UPDATE only

    static Message join(std::uint16_t site_id);
    static Message round_begin(std::uint32_t round, std::uint16_t site_id, ParamVector params);
    static Message round_update(std::uint32_t round, std::uint16_t site_id, ParamVector params,
                                std::uint64_t n, double train_loss);
    static Message round_commit(std::uint32_t round, std::uint16_t site_id, ParamVector params);
};

// Bitwise message equality (float payloads compared by bit pattern).
bool messages_identical(const Message& a, const Message& b);

std::vector<std::uint8_t> encode_message(const Message& msg);

// Decodes one complete frame; throws ProtocolError on bad magic/version,
// truncation, or any payload inconsistency.
Message decode_message(const std::vector<std::uint8_t>& frame);

// Incremental frame extraction from a byte stream delivered in arbitrary
// chunks.
class FrameReader {
public:
    void feed(const std::uint8_t* data, std::size_t size);

    // Returns the next complete frame, if any.
    std::optional<std::vector<std::uint8_t>> next_frame();

private:
    std::vector<std::uint8_t> buffer_;
};

}  // namespace fedkbp
