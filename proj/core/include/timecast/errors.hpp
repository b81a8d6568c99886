#pragma once

#include <stdexcept>
#include <string>

namespace timecast {

// Error with a stable machine-parsable tag. The CLI prints
// "error: <tag>: <message>" and maps tags to exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string tag, const std::string& message)
      : std::runtime_error(message), tag_(std::move(tag)) {}

  const std::string& tag() const { return tag_; }

 private:
  std::string tag_;
};

namespace errtag {
inline constexpr const char* kShape = "E_SHAPE";
inline constexpr const char* kRange = "E_RANGE";
inline constexpr const char* kTape = "E_TAPE";
inline constexpr const char* kNonFinite = "E_NONFINITE";
inline constexpr const char* kConfig = "E_CONFIG";
inline constexpr const char* kIo = "E_IO";
inline constexpr const char* kDataset = "E_DATASET";
inline constexpr const char* kCheckpoint = "E_CHECKPOINT";
inline constexpr const char* kHashMismatch = "E_HASH_MISMATCH";
inline constexpr const char* kArchiveGaps = "E_ARCHIVE_GAPS";
inline constexpr const char* kNanLoss = "E_NAN_LOSS";
inline constexpr const char* kArgs = "E_ARGS";
}  // namespace errtag

}  // namespace timecast
