package org.example.dfs.datanode;

import org.example.dfs.Block;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class PacketResponder {
    private static final Logger LOG = LoggerFactory.getLogger(PacketResponder.class);

    private final Block block;
    private final int numTargets;

    public PacketResponder(Block block, int numTargets) {
        this.block = block;
        this.numTargets = numTargets;
    }

    public void run(int ackCount) {
        for (int i = 0; i < ackCount; i++) {
            if (i == numTargets) {
                LOG.info("PacketResponder " + i + " for block " + block + " Interrupted.");
                break;
            }
        }
        LOG.info("PacketResponder " + numTargets + " for block " + block + " terminating");
    }
}
