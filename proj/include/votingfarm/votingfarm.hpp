#pragma once

#include "votingfarm/protocol.hpp"
#include "votingfarm/transport.hpp"
#include "votingfarm/algorithms.hpp"
#include "votingfarm/event_log.hpp"
#include "votingfarm/descriptor.hpp"
#include "votingfarm/voter.hpp"
#include "votingfarm/farm.hpp"
